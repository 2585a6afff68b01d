#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfl/matrix.hpp"

namespace vfl::data {

/// Labeled samples; the global index of a sample is its row.
struct Dataset {
    Matrix features;
    Labels labels;
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
    /// Throws DataError unless labels are in range and every class occurs.
    void validate() const;
};

using ColumnSet = std::vector<std::size_t>;

/// A dataset whose feature columns are split among passive parties.
struct PartitionedDataset {
    Dataset base;
    std::vector<ColumnSet> party_columns;

    std::size_t n_parties() const { return party_columns.size(); }
    /// All rows of party `k`'s columns.
    Matrix party_features(std::size_t k) const;
    void validate() const;
};

struct TaskSpec {
    std::string name;
    std::vector<int> mapping;  ///< old class -> new class
    std::size_t c_orig = 0;
    std::size_t c_new = 0;

    /// Throws ConfigError unless the mapping is total and onto [0, c_new).
    void validate() const;
};

enum class TaskKind { mnist_like_10, generic };

/// Gaussian class blobs (std 1) around separation * random unit directions.
/// Sample i has label i mod n_classes.
Dataset gen_synthetic(std::size_t n, std::size_t d, std::size_t n_classes, double separation, std::uint64_t seed);

/// Reads an IDX image file (magic 0x00000803) and label file (magic 0x00000801).
/// Pixels are scaled to [0, 1]; `limit` > 0 keeps only the first `limit` samples.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit = 0);

/// Seeded shuffle of 0..d-1 cut into k contiguous chunks, larger chunks first.
/// Each chunk is returned sorted.
std::vector<ColumnSet> partition_features(std::size_t d, std::size_t k, std::uint64_t seed);

PartitionedDataset partition(Dataset base, std::size_t k, std::uint64_t seed);

Labels reassign_task(const Labels& labels, const TaskSpec& spec);

/// Applies `spec` to the dataset labels and sets n_classes to spec.c_new.
Dataset reassign_task(Dataset ds, const TaskSpec& spec);

/// [original, task1, task2, task3] for the 10-class kind; for generic kinds a
/// halving chain of balanced contiguous groupings down to 2 classes.
std::vector<TaskSpec> builtin_task_specs(TaskKind kind, std::size_t n_classes = 10);

/// Looks up a built-in task by name ("original", "task1", ...).
TaskSpec find_task(const std::string& name, std::size_t n_classes);

}  // namespace vfl::data
