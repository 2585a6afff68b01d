#pragma once

#include <stdexcept>
#include <string>

namespace vfl {

/// Base of every error raised by the simulator.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid specification or parameter (dimension chain, cut position, sizes).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input data violates a precondition (label range, normalization, emptiness).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Exact enumeration would exceed the state budget.
class CapacityError : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch), detail_(what) {}

    std::size_t epoch() const noexcept { return epoch_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t epoch_;
    std::string detail_;
};

/// The attack cannot run on the given observations (e.g. fewer distinct rows than clusters).
class AttackInfeasible : public Error {
public:
    using Error::Error;
};

class AttackFailed : public Error {
public:
    using Error::Error;
};

}  // namespace vfl
