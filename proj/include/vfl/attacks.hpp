#pragma once

// Label inference attacks run by a passive party. Inputs are restricted to what
// that party holds: its own bottom model, the embeddings it produced, the
// gradients it received and a small labeled auxiliary set.

#include <cstdint>
#include <string>
#include <vector>

#include "vfl/matrix.hpp"
#include "vfl/nn.hpp"

namespace vfl::attack {

/// Labeled samples known to the attacker.
struct AuxiliaryData {
    std::vector<std::size_t> indices;  ///< global sample indices
    Matrix features;                   ///< the attacker's columns only
    Labels labels;

    std::size_t size() const { return indices.size(); }
    /// Throws DataError unless every class in [0, n_classes) has a sample.
    void validate(std::size_t n_classes) const;
};

/// Draws `per_class` samples of every class (fewer if a class is smaller).
AuxiliaryData sample_auxiliary(const Matrix& party_features, const Labels& labels, std::size_t n_classes,
                               std::size_t per_class, std::uint64_t seed);

struct AttackResult {
    std::string attack_name;
    Labels predicted;  ///< per global sample index
    double raw_accuracy = 0.0;
    double lift_normalized_accuracy = 0.0;
    std::size_t c_orig = 0;
    std::size_t c_new = 0;
};

/// raw / (1 / c_new) * (1 / c_orig).
double lift_normalize(double raw, std::size_t c_new, std::size_t c_orig);

double attack_accuracy(const Labels& predicted, const Labels& truth);

/// Fills the accuracy fields of `result` against the true labels.
void score(AttackResult& result, const Labels& truth, std::size_t c_new, std::size_t c_orig);

struct KMeansResult {
    Matrix centers;
    std::vector<int> assignment;
    std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops when no center moves more
/// than `tolerance` or after `max_iterations`.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300,
                    double tolerance = 1e-6);

/// Names clusters by majority vote of the auxiliary samples they contain
/// (ties to the smaller class). Clusters without auxiliary samples take the
/// label of the nearest center that has one. Returns one class per cluster.
std::vector<int> label_clusters(const Matrix& centers, const std::vector<int>& assignment,
                                const std::vector<std::size_t>& aux_indices, const Labels& aux_labels,
                                std::size_t n_classes);

/// k-means over the embeddings with k = n_classes.
AttackResult cluster_lia(const Matrix& embeddings, std::size_t n_classes, const AuxiliaryData& aux, std::uint64_t seed);

struct FineTuneParams {
    std::size_t epochs = 100;
    double lr = 0.05;
    std::size_t batch_size = 32;
};

/// Appends a fresh dense head to a copy of the bottom model, fine-tunes the stack
/// on the auxiliary set and predicts every row of `target_features`.
AttackResult completion_lia(const nn::Model& bottom, const AuxiliaryData& aux, const Matrix& target_features,
                            std::size_t n_classes, const FineTuneParams& params, std::uint64_t seed);

/// cluster_lia over the per-sample gradients returned in one epoch.
AttackResult gradient_cluster_lia(const Matrix& gradient_rows, std::size_t n_classes, const AuxiliaryData& aux,
                                  std::uint64_t seed);

}  // namespace vfl::attack
