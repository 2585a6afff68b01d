#include "vfl/info.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "vfl/errors.hpp"

namespace vfl::info {

namespace {

constexpr double sum_tolerance = 1e-12;

void check_distribution(std::span<const double> p, const char* what) {
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError(std::string(what) + ": negative or non-finite probability");
        total += v;
    }
    if (std::abs(total - 1.0) > sum_tolerance) throw DataError(std::string(what) + ": probabilities do not sum to 1");
}

void check_stochastic(const Matrix& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!(m(i, j) >= 0.0)) throw DataError(std::string(what) + ": negative transition probability");
            total += m(i, j);
        }
        if (std::abs(total - 1.0) > sum_tolerance)
            throw DataError(std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
    }
}

}  // namespace

void JointTable::validate() const {
    if (n_x == 0 || n_y == 0 || probs.size() != n_x * n_y) throw DataError("joint table shape is inconsistent");
    check_distribution(probs, "joint table");
}

JointTable JointTable::transposed() const {
    JointTable t{n_y, n_x, std::vector<double>(probs.size())};
    for (std::size_t x = 0; x < n_x; ++x)
        for (std::size_t y = 0; y < n_y; ++y) t.probs[y * n_x + x] = (*this)(x, y);
    return t;
}

std::vector<double> JointTable::marginal_x() const {
    std::vector<double> px(n_x, 0.0);
    for (std::size_t x = 0; x < n_x; ++x)
        for (std::size_t y = 0; y < n_y; ++y) px[x] += (*this)(x, y);
    return px;
}

std::vector<double> JointTable::marginal_y() const {
    std::vector<double> py(n_y, 0.0);
    for (std::size_t x = 0; x < n_x; ++x)
        for (std::size_t y = 0; y < n_y; ++y) py[y] += (*this)(x, y);
    return py;
}

double exact_entropy(std::span<const double> dist) {
    check_distribution(dist, "exact_entropy");
    double h = 0.0;
    for (double p : dist)
        if (p > 0.0) h -= p * std::log2(p);
    return h;
}

double conditional_entropy(const JointTable& joint) {
    joint.validate();
    const auto px = joint.marginal_x();
    double h = 0.0;
    for (std::size_t x = 0; x < joint.n_x; ++x)
        for (std::size_t y = 0; y < joint.n_y; ++y) {
            const double p = joint(x, y);
            if (p > 0.0) h -= p * std::log2(p / px[x]);
        }
    return h;
}

double exact_mi(const JointTable& joint) {
    joint.validate();
    const auto px = joint.marginal_x();
    const auto py = joint.marginal_y();
    double mi = 0.0;
    for (std::size_t x = 0; x < joint.n_x; ++x)
        for (std::size_t y = 0; y < joint.n_y; ++y) {
            const double p = joint(x, y);
            if (p > 0.0) mi += p * std::log2(p / (px[x] * py[y]));
        }
    return std::max(mi, 0.0);
}

namespace {

struct SymbolHash {
    std::size_t operator()(const std::vector<std::uint16_t>& v) const noexcept {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (auto b : v) {
            h ^= b;
            h *= 0x100000001B3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

MIEstimate binned_mi(const Matrix& activations, const Labels& labels, std::size_t n_bins) {
    if (activations.rows() == 0 || labels.empty()) throw DataError("binned_mi: empty input");
    if (static_cast<std::size_t>(activations.rows()) != labels.size())
        throw ShapeError("binned_mi: activation rows do not match label count");
    if (n_bins < 2 || n_bins > 65535) throw ConfigError("binned_mi: n_bins must lie in [2, 65535]");

    const auto n = static_cast<std::size_t>(activations.rows());
    const auto d = static_cast<std::size_t>(activations.cols());
    const Eigen::RowVectorXd lo = activations.colwise().minCoeff();
    const Eigen::RowVectorXd hi = activations.colwise().maxCoeff();
    const auto bins = static_cast<double>(n_bins);

    // Symbols and labels are renumbered densely in order of first appearance.
    std::unordered_map<std::vector<std::uint16_t>, std::size_t, SymbolHash> symbol_ids;
    std::unordered_map<int, std::size_t> label_ids;
    std::vector<std::size_t> sym(n), lab(n);
    std::vector<std::uint16_t> key(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < d; ++j) {
            const auto c = static_cast<Eigen::Index>(j);
            const double range = hi(c) - lo(c);
            std::size_t b = 0;
            if (range > 0.0) {
                const double u = (activations(r, c) - lo(c)) / range;
                b = std::min(static_cast<std::size_t>(u * bins), n_bins - 1);
            }
            key[j] = static_cast<std::uint16_t>(b);
        }
        sym[i] = symbol_ids.try_emplace(key, symbol_ids.size()).first->second;
        lab[i] = label_ids.try_emplace(labels[i], label_ids.size()).first->second;
    }

    MIEstimate est{0.0, n, n_bins};
    if (label_ids.size() < 2 || symbol_ids.size() < 2) return est;

    JointTable joint{symbol_ids.size(), label_ids.size(), std::vector<double>(symbol_ids.size() * label_ids.size(), 0.0)};
    // Counts are accumulated and normalized once so the table sums to 1 up to rounding.
    for (std::size_t i = 0; i < n; ++i) joint.probs[sym[i] * joint.n_y + lab[i]] += 1.0;
    double total = 0.0;
    for (auto& p : joint.probs) total += p;
    for (auto& p : joint.probs) p /= total;
    est.value = exact_mi(joint);
    if (est.value < 1e-9) est.value = 0.0;
    return est;
}

MIProfile mi_profile(const engine::TrainedState& state, const data::PartitionedDataset& data, std::size_t n_bins) {
    if (data.base.size() == 0) throw DataError("mi_profile: empty dataset");
    if (data.n_parties() != state.bottom_models.size()) throw ShapeError("mi_profile: party count mismatch");
    const auto& labels = data.base.labels;
    MIProfile profile;
    std::vector<Matrix> embeddings;
    for (std::size_t k = 0; k < state.bottom_models.size(); ++k) {
        const auto trace = nn::forward(state.bottom_models[k], data.party_features(k));
        profile.party_inputs.push_back(binned_mi(trace.front(), labels, n_bins));
        std::vector<MIEstimate> layers;
        for (std::size_t j = 1; j < trace.size(); ++j) layers.push_back(binned_mi(trace[j], labels, n_bins));
        profile.parties.push_back(std::move(layers));
        embeddings.push_back(trace.back());
    }
    const auto top_trace = nn::forward(state.top_model, engine::aggregate_embeddings(embeddings));
    for (std::size_t j = 1; j < top_trace.size(); ++j) profile.top.push_back(binned_mi(top_trace[j], labels, n_bins));
    return profile;
}

void MarkovChainSpec::validate() const {
    if (branches.empty()) throw DataError("chain: no branches");
    std::size_t product = 1;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& b = branches[i];
        check_distribution(b.input, "chain branch input");
        std::size_t width = b.input.size();
        for (const auto& t : b.transitions) {
            if (static_cast<std::size_t>(t.rows()) != width) throw DataError("chain: branch transition shapes do not chain");
            check_stochastic(t, "chain branch transition");
            width = static_cast<std::size_t>(t.cols());
        }
        product *= width;
        if (product > max_chain_states) throw CapacityError("chain: terminal product alphabet exceeds state budget");
    }
    if (static_cast<std::size_t>(lumping.rows()) != product)
        throw DataError("chain: lumping table has " + std::to_string(lumping.rows()) + " rows, expected " +
                        std::to_string(product));
    if (product * static_cast<std::size_t>(lumping.cols()) > max_chain_states)
        throw CapacityError("chain: lumping table exceeds state budget");
    check_stochastic(lumping, "chain lumping");
    auto width = lumping.cols();
    for (const auto& t : top_transitions) {
        if (t.rows() != width) throw DataError("chain: top transition shapes do not chain");
        check_stochastic(t, "chain top transition");
        width = t.cols();
    }
    if (to_label.rows() != width) throw DataError("chain: label transition does not match last top stage");
    check_stochastic(to_label, "chain label transition");
}

namespace {

double mi_of(const Eigen::VectorXd& p_v, const Matrix& y_given_v) {
    JointTable j{static_cast<std::size_t>(p_v.size()), static_cast<std::size_t>(y_given_v.cols()), {}};
    j.probs.resize(j.n_x * j.n_y);
    double total = 0.0;
    for (std::size_t v = 0; v < j.n_x; ++v)
        for (std::size_t y = 0; y < j.n_y; ++y) {
            const double p = p_v(static_cast<Eigen::Index>(v)) * y_given_v(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(y));
            j.probs[v * j.n_y + y] = p;
            total += p;
        }
    for (auto& p : j.probs) p /= total;
    return exact_mi(j);
}

}  // namespace

ChainMiSequences chain_mi_sequence(const MarkovChainSpec& chain) {
    chain.validate();
    const std::size_t k = chain.branches.size();

    // Stage marginals per branch.
    std::vector<std::vector<Eigen::VectorXd>> marginals(k);
    std::vector<std::size_t> terminal_sizes(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& b = chain.branches[i];
        Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(b.input.data(), static_cast<Eigen::Index>(b.input.size()));
        marginals[i].push_back(m);
        for (const auto& t : b.transitions) {
            m = t.transpose() * m;
            marginals[i].push_back(m);
        }
        terminal_sizes[i] = static_cast<std::size_t>(m.size());
    }

    // p(y | S_j) for each top stage, built from the label end.
    std::vector<Matrix> y_given_s(chain.top_transitions.size() + 1);
    y_given_s.back() = chain.to_label;
    for (std::size_t j = chain.top_transitions.size(); j-- > 0;) y_given_s[j] = chain.top_transitions[j] * y_given_s[j + 1];

    const Matrix y_given_terminals = chain.lumping * y_given_s.front();
    const auto n_y = y_given_terminals.cols();

    // Joint of each branch terminal with Y, and the law of S_1, by enumerating the product alphabet.
    std::vector<Matrix> terminal_y(k);
    for (std::size_t i = 0; i < k; ++i) terminal_y[i] = Matrix::Zero(static_cast<Eigen::Index>(terminal_sizes[i]), n_y);
    Eigen::VectorXd p_s1 = Eigen::VectorXd::Zero(chain.lumping.cols());
    std::vector<std::size_t> digits(k, 0);
    for (Eigen::Index row = 0; row < chain.lumping.rows(); ++row) {
        double p = 1.0;
        for (std::size_t i = 0; i < k; ++i) p *= marginals[i].back()(static_cast<Eigen::Index>(digits[i]));
        if (p > 0.0) {
            for (std::size_t i = 0; i < k; ++i)
                terminal_y[i].row(static_cast<Eigen::Index>(digits[i])) += p * y_given_terminals.row(row);
            p_s1 += p * chain.lumping.row(row).transpose();
        }
        for (std::size_t i = k; i-- > 0;) {
            if (++digits[i] < terminal_sizes[i]) break;
            digits[i] = 0;
        }
    }

    ChainMiSequences out;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& b = chain.branches[i];
        const auto& term_marg = marginals[i].back();
        Matrix y_given_term = terminal_y[i];
        for (Eigen::Index t = 0; t < y_given_term.rows(); ++t)
            if (term_marg(t) > 0.0) y_given_term.row(t) /= term_marg(t);

        std::vector<double> seq(b.transitions.size() + 1);
        Matrix y_given_stage = y_given_term;
        for (std::size_t j = b.transitions.size() + 1; j-- > 0;) {
            seq[j] = mi_of(marginals[i][j], y_given_stage);
            if (j > 0) y_given_stage = b.transitions[j - 1] * y_given_stage;
        }
        out.branches.push_back(std::move(seq));
    }

    Eigen::VectorXd p_s = p_s1;
    for (std::size_t j = 0; j < y_given_s.size(); ++j) {
        out.top.push_back(mi_of(p_s, y_given_s[j]));
        if (j < chain.top_transitions.size()) p_s = chain.top_transitions[j].transpose() * p_s;
    }
    return out;
}

namespace {

Matrix random_stochastic(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, cols - 1);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double sharpness = u(rng);
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng) < 0.3 ? 0.0 : u(rng);
        m(r, static_cast<Eigen::Index>(pick(rng))) += 4.0 * sharpness;
        m.row(r) /= m.row(r).sum();
    }
    return m;
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += (v = u(rng));
    for (auto& v : p) v /= total;
    return p;
}

}  // namespace

MarkovChainSpec random_chain(std::uint64_t seed, std::size_t k, std::size_t n, std::size_t m, std::size_t max_alphabet) {
    if (k == 0 || m == 0 || max_alphabet < 2) throw ConfigError("random_chain: need k >= 1, m >= 1, max_alphabet >= 2");
    std::mt19937_64 rng(derive_seed(seed, {0xC4A1}));
    std::uniform_int_distribution<std::size_t> size(2, max_alphabet);
    MarkovChainSpec chain;
    std::size_t product = 1;
    for (std::size_t i = 0; i < k; ++i) {
        ChainBranch b;
        std::size_t width = size(rng);
        b.input = random_distribution(rng, width);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t next = size(rng);
            b.transitions.push_back(random_stochastic(rng, width, next));
            width = next;
        }
        product *= width;
        chain.branches.push_back(std::move(b));
    }
    std::size_t width = size(rng);
    chain.lumping = random_stochastic(rng, product, width);
    for (std::size_t j = 1; j < m; ++j) {
        const std::size_t next = size(rng);
        chain.top_transitions.push_back(random_stochastic(rng, width, next));
        width = next;
    }
    chain.to_label = random_stochastic(rng, width, size(rng));
    return chain;
}

}  // namespace vfl::info
