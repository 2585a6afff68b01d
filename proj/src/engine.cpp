#include "vfl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "vfl/errors.hpp"

namespace vfl::engine {

namespace {

constexpr std::uint64_t party_stride = 0x9E3779B97F4A7C15ULL;

// Party 0 shares the run seed so a single-party split initialises like the whole network.
std::uint64_t party_seed(std::uint64_t seed, std::size_t k) { return seed + k * party_stride; }

}  // namespace

void SplitSpec::validate() const {
    full_layers.validate();
    const auto total = static_cast<int>(full_layers.layers.size());
    if (cut_pos > -1 || cut_pos <= -total)
        throw ConfigError("cut_pos " + std::to_string(cut_pos) + " outside (-" + std::to_string(total) + ", -1]");
}

std::pair<nn::ModelSpec, nn::ModelSpec> split_model(const SplitSpec& split) {
    split.validate();
    const auto& layers = split.full_layers.layers;
    const auto n_bottom = static_cast<std::ptrdiff_t>(layers.size()) + split.cut_pos;
    nn::ModelSpec bottom{{layers.begin(), layers.begin() + n_bottom}};
    nn::ModelSpec top{{layers.begin() + n_bottom, layers.end()}};
    return {std::move(bottom), std::move(top)};
}

void VflConfig::validate() const {
    split.validate();
    if (n_parties == 0) throw ConfigError("n_parties must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    std::size_t label_defenses = 0;
    for (const auto& d : defense_stack) {
        d.validate();
        if (d.point() == defense::InterceptionPoint::labels_at_active_party) ++label_defenses;
    }
    if (label_defenses > 1) throw ConfigError("at most one label defense may be stacked");
}

PartySpecs party_specs(const VflConfig& config, const data::PartitionedDataset& data) {
    config.validate();
    if (data.n_parties() != config.n_parties)
        throw ConfigError("dataset is split among " + std::to_string(data.n_parties()) + " parties, config expects " +
                          std::to_string(config.n_parties));
    if (config.split.full_layers.input_dim() != data.base.dim())
        throw ConfigError("model input dim " + std::to_string(config.split.full_layers.input_dim()) +
                          " does not match feature dim " + std::to_string(data.base.dim()));
    auto [bottom, top] = split_model(config.split);
    PartySpecs out;
    for (const auto& cols : data.party_columns) {
        auto b = bottom;
        b.layers.front().in_dim = cols.size();
        b.validate();
        out.bottoms.push_back(std::move(b));
    }
    top.layers.front().in_dim = bottom.output_dim() * config.n_parties;
    for (const auto& d : config.defense_stack)
        if (const auto* rle = std::get_if<defense::RleLabels>(&d.params)) top.layers.back().out_dim += rle->extra_dims;
    top.validate();
    out.top = std::move(top);
    return out;
}

const Matrix& AttackerTrace::gradients_at(std::size_t epoch) const {
    for (std::size_t i = 0; i < epochs.size(); ++i)
        if (epochs[i] == epoch) return gradients[i];
    throw ConfigError("epoch " + std::to_string(epoch) + " was not captured in the attacker trace");
}

Matrix aggregate_embeddings(std::span<const Matrix> parts) {
    if (parts.empty()) throw ShapeError("aggregate_embeddings: no parts");
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != parts.front().rows()) throw ShapeError("aggregate_embeddings: parts differ in row count");
        cols += p.cols();
    }
    Matrix out(parts.front().rows(), cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return out;
}

std::vector<Matrix> scatter_gradient(const Matrix& agg_grad, std::span<const std::size_t> widths) {
    const auto total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
    if (total != static_cast<std::size_t>(agg_grad.cols()))
        throw ShapeError("scatter_gradient: widths sum to " + std::to_string(total) + ", gradient has " +
                         std::to_string(agg_grad.cols()) + " columns");
    std::vector<Matrix> out;
    Eigen::Index at = 0;
    for (auto w : widths) {
        out.emplace_back(agg_grad.middleCols(at, static_cast<Eigen::Index>(w)));
        at += static_cast<Eigen::Index>(w);
    }
    return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, {0xBA7C, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return batches;
}

namespace {

struct Targets {
    bool soft = false;
    Matrix soft_targets;
    LabelDecoding decoding;
};

Targets make_targets(const VflConfig& config, const data::Dataset& ds) {
    Targets t;
    t.decoding.n_classes = ds.n_classes;
    t.decoding.output_to_class.resize(ds.n_classes);
    std::iota(t.decoding.output_to_class.begin(), t.decoding.output_to_class.end(), 0);
    for (const auto& d : config.defense_stack) {
        defense::SoftTargets st;
        if (const auto* cae = std::get_if<defense::CaeLabels>(&d.params)) {
            st = defense::cae_soft_labels(ds.labels, ds.n_classes, cae->alpha,
                                          derive_seed(config.seed, {0xCAE, cae->permutation_seed}));
        } else if (const auto* rle = std::get_if<defense::RleLabels>(&d.params)) {
            st = defense::rle_extend(ds.labels, ds.n_classes, rle->extra_dims, rle->noise_scale,
                                     derive_seed(config.seed, {0x41E}));
        } else {
            continue;
        }
        t.soft = true;
        t.soft_targets = std::move(st.targets);
        t.decoding = {st.n_classes, std::move(st.output_to_class)};
    }
    return t;
}

Labels decode(const Matrix& logits, const LabelDecoding& decoding) {
    auto out = argmax_rows(logits, decoding.n_classes);
    for (auto& o : out) o = decoding.output_to_class[static_cast<std::size_t>(o)];
    return out;
}

bool model_finite(const nn::Model& m) {
    for (std::size_t j = 0; j < m.weights.size(); ++j)
        if (!m.weights[j].allFinite() || !m.biases[j].allFinite()) return false;
    return true;
}

}  // namespace

TrainResult train_vfl(const VflConfig& config, const data::PartitionedDataset& data) {
    data.validate();
    const auto specs = party_specs(config, data);
    const std::size_t K = config.n_parties;
    const std::size_t N = data.base.size();
    const std::size_t n_bottom = specs.bottoms.front().layers.size();

    TrainResult result;
    auto& state = result.state;
    for (std::size_t k = 0; k < K; ++k) state.bottom_models.push_back(nn::init_model(specs.bottoms[k], party_seed(config.seed, k)));
    state.top_model = nn::init_model(specs.top, config.seed, n_bottom);

    const bool has_gradient_defense =
        std::any_of(config.defense_stack.begin(), config.defense_stack.end(),
                    [](const auto& d) { return d.point() == defense::InterceptionPoint::gradients_to_parties; });
    auto targets = make_targets(config, data.base);
    state.decoding = targets.decoding;

    std::vector<std::size_t> widths;
    for (const auto& b : state.bottom_models) widths.push_back(b.spec.output_dim());

    result.traces.resize(K);
    for (std::size_t k = 0; k < K; ++k) result.traces[k].party_id = k;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const bool capture = !config.trace_epochs ||
                             std::find(config.trace_epochs->begin(), config.trace_epochs->end(), epoch) !=
                                 config.trace_epochs->end();
        if (capture) {
            for (std::size_t k = 0; k < K; ++k) {
                auto& tr = result.traces[k];
                tr.epochs.push_back(epoch);
                tr.embeddings.emplace_back(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(widths[k]));
                tr.gradients.emplace_back(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(widths[k]));
            }
        }

        std::size_t correct = 0;
        const auto batches = epoch_batches(N, config.batch_size, config.seed, epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& rows = batches[b];
            std::vector<nn::ActivationTrace> bottom_traces;
            std::vector<Matrix> embeddings;
            for (std::size_t k = 0; k < K; ++k) {
                bottom_traces.push_back(
                    nn::forward(state.bottom_models[k], gather(data.base.features, rows, data.party_columns[k])));
                embeddings.push_back(bottom_traces.back().back());
            }
            const Matrix aggregated = aggregate_embeddings(embeddings);
            const auto top_trace = nn::forward(state.top_model, aggregated);
            const Matrix& logits = top_trace.back();

            Labels batch_labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = data.base.labels[rows[i]];
            const auto loss = targets.soft ? nn::cross_entropy_loss(logits, gather_rows(targets.soft_targets, rows))
                                           : nn::cross_entropy_loss(logits, batch_labels);
            if (!std::isfinite(loss.loss)) throw TrainingDiverged(epoch, "non-finite loss");

            const auto predicted = decode(logits, state.decoding);
            for (std::size_t i = 0; i < rows.size(); ++i) correct += predicted[i] == batch_labels[i];

            const auto top_grads = nn::backward(state.top_model, top_trace, loss.logit_grad);
            if (!top_grads.input.allFinite()) throw TrainingDiverged(epoch, "non-finite embedding gradient");
            auto party_grads = scatter_gradient(top_grads.input, widths);

            for (std::size_t k = 0; k < K; ++k) {
                if (has_gradient_defense) {
                    // Defenses see per-example gradients (d loss_i / d z_i), the scale
                    // their norm bounds and noise levels are stated in.
                    const auto batch = static_cast<double>(rows.size());
                    party_grads[k] = defense::apply_gradient_defenses(config.defense_stack, party_grads[k] * batch,
                                                                      derive_seed(config.seed, {0xDEF, epoch, b, k})) /
                                     batch;
                }
                if (capture) {
                    auto& tr = result.traces[k];
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        const auto r = static_cast<Eigen::Index>(rows[i]);
                        tr.embeddings.back().row(r) = embeddings[k].row(static_cast<Eigen::Index>(i));
                        tr.gradients.back().row(r) = party_grads[k].row(static_cast<Eigen::Index>(i));
                    }
                }
                const auto g = nn::backward(state.bottom_models[k], bottom_traces[k], party_grads[k]);
                state.bottom_models[k] = nn::sgd_step(std::move(state.bottom_models[k]), g, config.lr);
            }
            state.top_model = nn::sgd_step(std::move(state.top_model), top_grads, config.lr);
        }
        for (const auto& m : state.bottom_models)
            if (!model_finite(m)) throw TrainingDiverged(epoch, "non-finite bottom parameters");
        if (!model_finite(state.top_model)) throw TrainingDiverged(epoch, "non-finite top parameters");
        state.mta_history.push_back(static_cast<double>(correct) / static_cast<double>(N));
    }

    for (std::size_t k = 0; k < K; ++k)
        result.traces[k].final_embeddings = nn::forward(state.bottom_models[k], data.party_features(k)).back();
    return result;
}

Labels predict(const TrainedState& state, const data::PartitionedDataset& data) {
    if (data.base.size() == 0) throw DataError("predict: empty evaluation set");
    if (data.n_parties() != state.bottom_models.size())
        throw ShapeError("predict: dataset party count differs from trained state");
    std::vector<Matrix> embeddings;
    for (std::size_t k = 0; k < state.bottom_models.size(); ++k)
        embeddings.push_back(nn::forward(state.bottom_models[k], data.party_features(k)).back());
    const auto logits = nn::forward(state.top_model, aggregate_embeddings(embeddings)).back();
    return decode(logits, state.decoding);
}

double evaluate_mta(const TrainedState& state, const data::PartitionedDataset& data) {
    const auto predicted = predict(state, data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == data.base.labels[i];
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

nn::Model train_centralized(const nn::ModelSpec& spec, const data::Dataset& data, std::size_t epochs,
                            std::size_t batch_size, double lr, std::uint64_t seed) {
    auto model = nn::init_model(spec, seed);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& rows : epoch_batches(data.size(), batch_size, seed, epoch)) {
            Labels labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = data.labels[rows[i]];
            const auto trace = nn::forward(model, gather_rows(data.features, rows));
            const auto loss = nn::cross_entropy_loss(trace.back(), labels);
            if (!std::isfinite(loss.loss)) throw TrainingDiverged(epoch, "non-finite loss");
            const auto grads = nn::backward(model, trace, loss.logit_grad);
            model = nn::sgd_step(std::move(model), grads, lr);
        }
    }
    return model;
}

}  // namespace vfl::engine
