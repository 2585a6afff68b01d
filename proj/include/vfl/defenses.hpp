#pragma once

// Gradient-side defenses act on the per-party gradient rows the active party
// sends back; label-side defenses replace the training targets at the active party.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "vfl/matrix.hpp"

namespace vfl::defense {

struct GradClip {
    double max_norm = 1.0;
};

struct DpGaussian {
    double clip = 1.0;
    double sigma = 0.5;
};

struct GradCompress {
    double keep_ratio = 0.25;
};

struct CaeLabels {
    double alpha = 0.2;
    std::uint64_t permutation_seed = 0;
};

struct RleLabels {
    std::size_t extra_dims = 0;
    double noise_scale = 0.1;
};

enum class InterceptionPoint { gradients_to_parties, labels_at_active_party };

struct DefenseConfig {
    std::variant<GradClip, DpGaussian, GradCompress, CaeLabels, RleLabels> params;

    std::string kind() const;
    InterceptionPoint point() const;
    /// Throws ConfigError on out-of-range parameters.
    void validate() const;
};

/// Rescales every row whose L2 norm exceeds max_norm to norm max_norm.
Matrix clip_gradient(const Matrix& grad_rows, double max_norm);

/// Row clip to `clip`, then i.i.d. N(0, (sigma * clip)^2) noise per entry.
Matrix dp_gaussian(const Matrix& grad_rows, double clip, double sigma, std::uint64_t seed);

/// Keeps the ceil(keep_ratio * cols) largest-magnitude entries of each row.
/// Equal magnitudes prefer the lower column.
Matrix compress_topk(const Matrix& grad_rows, double keep_ratio);

struct SoftTargets {
    Matrix targets;
    /// Decoding from model output column to true class, size n_classes. Identity
    /// unless the defense relabels classes.
    std::vector<int> output_to_class;
    /// Number of leading output columns that carry class scores.
    std::size_t n_classes = 0;
};

/// Seeded derangement pi of the classes (single cycle); row i is
/// (1 - alpha) * onehot(pi(y_i)) + alpha / (C - 1) on every other class.
SoftTargets cae_soft_labels(const Labels& labels, std::size_t n_classes, double alpha, std::uint64_t seed);

/// One-hot widened by `extra_dims` columns of U[0, noise_scale] noise, rows renormalized.
SoftTargets rle_extend(const Labels& labels, std::size_t n_classes, std::size_t extra_dims, double noise_scale,
                       std::uint64_t seed);

/// Applies the gradient defenses of `stack` in declared order. `seed` must already
/// be specific to the batch and party.
Matrix apply_gradient_defenses(const std::vector<DefenseConfig>& stack, Matrix grad_rows, std::uint64_t seed);

}  // namespace vfl::defense
