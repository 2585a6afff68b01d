#pragma once

// Aggregated vertical federated training: K passive parties each run a bottom
// model on their own feature columns, the active party concatenates the
// embeddings, runs the top model against its labels and returns per-party
// embedding gradients.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vfl/data.hpp"
#include "vfl/defenses.hpp"
#include "vfl/nn.hpp"

namespace vfl::engine {

/// End-to-end architecture and where to cut it. cut_pos counts from the last
/// layer: -1 leaves only the final layer on top, -2 the last two, and so on.
struct SplitSpec {
    nn::ModelSpec full_layers;
    int cut_pos = -1;

    void validate() const;
};

/// (bottom layers, top layers); their concatenation is full_layers.
std::pair<nn::ModelSpec, nn::ModelSpec> split_model(const SplitSpec& split);

struct VflConfig {
    SplitSpec split;
    std::size_t n_parties = 1;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.1;
    std::vector<defense::DefenseConfig> defense_stack;
    std::uint64_t seed = 0;
    /// Epochs whose embeddings and returned gradients are kept in the attacker
    /// traces; unset keeps every epoch.
    std::optional<std::vector<std::size_t>> trace_epochs;

    void validate() const;
};

/// Per-party bottom specs (first layer resized to the party's column count) and
/// the top spec (first layer reading the concatenated embeddings, last layer
/// widened when a label-extension defense is active).
struct PartySpecs {
    std::vector<nn::ModelSpec> bottoms;
    nn::ModelSpec top;
};

PartySpecs party_specs(const VflConfig& config, const data::PartitionedDataset& data);

/// How top-model output columns map back to true classes.
struct LabelDecoding {
    std::size_t n_classes = 0;          ///< leading output columns holding class scores
    std::vector<int> output_to_class;   ///< size n_classes
};

struct TrainedState {
    std::vector<nn::Model> bottom_models;
    nn::Model top_model;
    /// Running training-batch accuracy per epoch.
    std::vector<double> mta_history;
    LabelDecoding decoding;
};

/// Everything a passive party observes while following the protocol. Row i of
/// every matrix belongs to global sample index i.
struct AttackerTrace {
    std::size_t party_id = 0;
    std::vector<std::size_t> epochs;
    std::vector<Matrix> embeddings;  ///< per captured epoch
    std::vector<Matrix> gradients;   ///< per captured epoch, after gradient defenses
    Matrix final_embeddings;         ///< training set through the final bottom model

    /// Returned gradients of a captured epoch; throws ConfigError if not captured.
    const Matrix& gradients_at(std::size_t epoch) const;
};

struct TrainResult {
    TrainedState state;
    std::vector<AttackerTrace> traces;
};

/// Column-wise concatenation in party order.
Matrix aggregate_embeddings(std::span<const Matrix> parts);

/// Inverse of aggregate_embeddings along columns.
std::vector<Matrix> scatter_gradient(const Matrix& agg_grad, std::span<const std::size_t> widths);

/// Mini-batches of one epoch: a seeded shuffle of 0..n-1 cut into runs of batch_size.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Gradient defenses act on per-example embedding gradients (batch size times the
/// batch-mean gradient); the defended rows are scaled back before they are sent
/// and recorded.
TrainResult train_vfl(const VflConfig& config, const data::PartitionedDataset& data);

/// Decoded class predictions for every sample.
Labels predict(const TrainedState& state, const data::PartitionedDataset& data);

double evaluate_mta(const TrainedState& state, const data::PartitionedDataset& data);

/// Non-distributed SGD on `spec` with the batching and initialisation scheme of
/// train_vfl; the reference trajectory for split training with one party.
nn::Model train_centralized(const nn::ModelSpec& spec, const data::Dataset& data, std::size_t epochs,
                            std::size_t batch_size, double lr, std::uint64_t seed);

}  // namespace vfl::engine
