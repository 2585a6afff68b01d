#pragma once

// Dense feed-forward networks with hand-derived backpropagation and plain SGD.

#include <cstdint>
#include <string>
#include <vector>

#include "vfl/matrix.hpp"

namespace vfl::nn {

enum class Activation {
    relu,
    identity,
    softmax_at_loss,  ///< affine output; softmax is applied inside the loss
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::relu;

    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    std::vector<LayerSpec> layers;

    /// Throws ConfigError unless the layer dims chain and softmax only closes the stack.
    void validate() const;
    std::size_t input_dim() const { return layers.front().in_dim; }
    std::size_t output_dim() const { return layers.back().out_dim; }
    std::size_t parameter_count() const;

    bool operator==(const ModelSpec&) const = default;
};

/// Builds a ReLU MLP whose last layer is a softmax-at-loss classifier.
ModelSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t n_classes);

struct Model {
    ModelSpec spec;
    std::vector<Matrix> weights;  ///< layer j: in_dim x out_dim
    std::vector<Vector> biases;   ///< layer j: out_dim

    std::size_t parameter_count() const { return spec.parameter_count(); }
};

/// Post-activation outputs; entry 0 is the input batch, the last entry the logits.
using ActivationTrace = std::vector<Matrix>;

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;  ///< d loss / d input batch
};

struct LossResult {
    double loss = 0.0;
    Matrix logit_grad;
};

/// Gaussian weights with std 1/sqrt(in_dim), zero biases. Layer j draws from its own
/// stream keyed by (seed, first_layer + j), so a network cut into consecutive pieces
/// initialises exactly like the whole when the pieces pass matching offsets.
Model init_model(const ModelSpec& spec, std::uint64_t seed, std::size_t first_layer = 0);

ActivationTrace forward(const Model& model, const Matrix& batch);

/// Mean cross-entropy of softmax(logits) against class indices.
LossResult cross_entropy_loss(const Matrix& logits, const Labels& labels);

/// Mean cross-entropy against target distributions (one row per sample).
LossResult cross_entropy_loss(const Matrix& logits, const Matrix& targets);

Gradients backward(const Model& model, const ActivationTrace& trace, const Matrix& out_grad);

Model sgd_step(Model model, const Gradients& grads, double lr);

/// Row-wise softmax.
Matrix softmax(const Matrix& logits);

}  // namespace vfl::nn
