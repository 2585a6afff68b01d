#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vfl {

/// Dense row-major real matrix; one row per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Class indices, one per sample.
using Labels = std::vector<int>;

bool all_finite(const Matrix& m);

/// Rows of `m` at `rows`, in that order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Columns of `m` at `cols`, in that order.
Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols);

/// Sub-block of `m`: rows at `rows`, columns at `cols`.
Matrix gather(const Matrix& m, std::span<const std::size_t> rows, std::span<const std::size_t> cols);

/// Index of the largest entry in each row; ties go to the lowest column.
std::vector<int> argmax_rows(const Matrix& m, std::size_t n_cols);

/// Stable 64-bit seed derivation (splitmix64 over the tag sequence).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

}  // namespace vfl
