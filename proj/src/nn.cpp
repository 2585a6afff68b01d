#include "vfl/nn.hpp"

#include <cmath>
#include <random>

#include "vfl/errors.hpp"

namespace vfl::nn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax_at_loss: return "softmax";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    if (name == "softmax") return Activation::softmax_at_loss;
    throw ConfigError("unknown activation '" + name + "'");
}

void ModelSpec::validate() const {
    if (layers.empty()) throw ConfigError("model spec has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in_dim == 0 || l.out_dim == 0)
            throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
        if (l.activation == Activation::softmax_at_loss && i + 1 != layers.size())
            throw ConfigError("softmax layer " + std::to_string(i) + " is not the final layer");
        if (i > 0 && layers[i - 1].out_dim != l.in_dim)
            throw ConfigError("layer " + std::to_string(i - 1) + " out_dim " + std::to_string(layers[i - 1].out_dim) +
                              " does not match layer " + std::to_string(i) + " in_dim " + std::to_string(l.in_dim));
    }
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.in_dim * l.out_dim + l.out_dim;
    return n;
}

ModelSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t n_classes) {
    ModelSpec spec;
    std::size_t prev = input_dim;
    for (auto w : hidden) {
        spec.layers.push_back({prev, w, Activation::relu});
        prev = w;
    }
    spec.layers.push_back({prev, n_classes, Activation::softmax_at_loss});
    spec.validate();
    return spec;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed, std::size_t first_layer) {
    spec.validate();
    Model model;
    model.spec = spec;
    for (std::size_t j = 0; j < spec.layers.size(); ++j) {
        const auto& l = spec.layers[j];
        std::mt19937_64 rng(derive_seed(seed, {first_layer + j}));
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(l.in_dim)));
        Matrix w(static_cast<Eigen::Index>(l.in_dim), static_cast<Eigen::Index>(l.out_dim));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(l.out_dim)));
    }
    return model;
}

ActivationTrace forward(const Model& model, const Matrix& batch) {
    const auto& layers = model.spec.layers;
    if (static_cast<std::size_t>(batch.cols()) != model.spec.input_dim())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                         std::to_string(model.spec.input_dim()));
    ActivationTrace trace;
    trace.reserve(layers.size() + 1);
    trace.push_back(batch);
    for (std::size_t j = 0; j < layers.size(); ++j) {
        Matrix z(batch.rows(), static_cast<Eigen::Index>(layers[j].out_dim));
        z.noalias() = trace.back() * model.weights[j];
        z.rowwise() += model.biases[j].transpose();
        if (layers[j].activation == Activation::relu) z = z.cwiseMax(0.0);
        trace.push_back(std::move(z));
    }
    return trace;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

namespace {

// log-softmax of one row, stable against large logits
Eigen::RowVectorXd log_softmax_row(const Matrix& logits, Eigen::Index i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - mx;
    const double lse = std::log(shifted.array().exp().sum());
    return shifted.array() - lse;
}

}  // namespace

LossResult cross_entropy_loss(const Matrix& logits, const Labels& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ShapeError("cross_entropy_loss: logits rows do not match label count");
    if (labels.empty()) throw DataError("cross_entropy_loss: empty batch");
    const auto n = static_cast<double>(labels.size());
    LossResult out;
    out.logit_grad.resize(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols())
            throw DataError("cross_entropy_loss: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(logits.cols()) + ")");
        const Eigen::RowVectorXd logp = log_softmax_row(logits, i);
        total -= logp(y);
        out.logit_grad.row(i) = logp.array().exp();
        out.logit_grad(i, y) -= 1.0;
    }
    out.logit_grad /= n;
    out.loss = total / n;
    return out;
}

LossResult cross_entropy_loss(const Matrix& logits, const Matrix& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
        throw ShapeError("cross_entropy_loss: logits and targets differ in shape");
    if (logits.rows() == 0) throw DataError("cross_entropy_loss: empty batch");
    const auto n = static_cast<double>(logits.rows());
    LossResult out;
    out.logit_grad.resize(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const Eigen::RowVectorXd logp = log_softmax_row(logits, i);
        total -= (targets.row(i).array() * logp.array()).sum();
        out.logit_grad.row(i) = logp.array().exp().matrix() - targets.row(i);
    }
    out.logit_grad /= n;
    out.loss = total / n;
    return out;
}

Gradients backward(const Model& model, const ActivationTrace& trace, const Matrix& out_grad) {
    const auto& layers = model.spec.layers;
    if (trace.size() != layers.size() + 1) throw ShapeError("backward: trace length does not match model depth");
    if (out_grad.rows() != trace.back().rows() || out_grad.cols() != trace.back().cols())
        throw ShapeError("backward: out_grad shape does not match model output");
    Gradients g;
    g.weights.resize(layers.size());
    g.biases.resize(layers.size());
    Matrix delta = out_grad;
    for (std::size_t j = layers.size(); j-- > 0;) {
        if (layers[j].activation == Activation::relu)
            delta = (trace[j + 1].array() > 0.0).select(delta, 0.0);
        g.weights[j].noalias() = trace[j].transpose() * delta;
        g.biases[j] = delta.colwise().sum().transpose();
        Matrix prev(delta.rows(), model.weights[j].rows());
        prev.noalias() = delta * model.weights[j].transpose();
        delta = std::move(prev);
    }
    g.input = std::move(delta);
    return g;
}

Model sgd_step(Model model, const Gradients& grads, double lr) {
    if (grads.weights.size() != model.weights.size() || grads.biases.size() != model.biases.size())
        throw ShapeError("sgd_step: gradient layer count does not match model");
    for (std::size_t j = 0; j < model.weights.size(); ++j) {
        if (grads.weights[j].rows() != model.weights[j].rows() || grads.weights[j].cols() != model.weights[j].cols() ||
            grads.biases[j].size() != model.biases[j].size())
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(j));
        model.weights[j] -= lr * grads.weights[j];
        model.biases[j] -= lr * grads.biases[j];
    }
    return model;
}

}  // namespace vfl::nn
