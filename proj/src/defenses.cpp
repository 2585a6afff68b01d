#include "vfl/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vfl/errors.hpp"

namespace vfl::defense {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string DefenseConfig::kind() const {
    return std::visit(overloaded{[](const GradClip&) { return std::string("grad_clip"); },
                                 [](const DpGaussian&) { return std::string("dp_gaussian"); },
                                 [](const GradCompress&) { return std::string("grad_compress"); },
                                 [](const CaeLabels&) { return std::string("cae_labels"); },
                                 [](const RleLabels&) { return std::string("rle_labels"); }},
                      params);
}

InterceptionPoint DefenseConfig::point() const {
    if (std::holds_alternative<CaeLabels>(params) || std::holds_alternative<RleLabels>(params))
        return InterceptionPoint::labels_at_active_party;
    return InterceptionPoint::gradients_to_parties;
}

void DefenseConfig::validate() const {
    std::visit(overloaded{[](const GradClip& p) {
                              if (!(p.max_norm > 0)) throw ConfigError("grad_clip: max_norm must be > 0");
                          },
                          [](const DpGaussian& p) {
                              if (!(p.clip > 0)) throw ConfigError("dp_gaussian: clip must be > 0");
                              if (!(p.sigma >= 0)) throw ConfigError("dp_gaussian: sigma must be >= 0");
                          },
                          [](const GradCompress& p) {
                              if (!(p.keep_ratio > 0 && p.keep_ratio <= 1))
                                  throw ConfigError("grad_compress: keep_ratio must lie in (0, 1]");
                          },
                          [](const CaeLabels& p) {
                              if (!(p.alpha >= 0 && p.alpha <= 1)) throw ConfigError("cae_labels: alpha must lie in [0, 1]");
                          },
                          [](const RleLabels& p) {
                              if (!(p.noise_scale >= 0)) throw ConfigError("rle_labels: noise_scale must be >= 0");
                          }},
               params);
}

Matrix clip_gradient(const Matrix& grad_rows, double max_norm) {
    if (!(max_norm > 0)) throw ConfigError("clip_gradient: max_norm must be > 0");
    Matrix out = grad_rows;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (norm > max_norm) out.row(i) *= max_norm / norm;
    }
    return out;
}

Matrix dp_gaussian(const Matrix& grad_rows, double clip, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0)) throw ConfigError("dp_gaussian: sigma must be >= 0");
    Matrix out = clip_gradient(grad_rows, clip);
    if (sigma == 0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma * clip);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += noise(rng);
    return out;
}

Matrix compress_topk(const Matrix& grad_rows, double keep_ratio) {
    if (!(keep_ratio > 0 && keep_ratio <= 1)) throw ConfigError("compress_topk: keep_ratio must lie in (0, 1]");
    const auto cols = static_cast<std::size_t>(grad_rows.cols());
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(cols) - 1e-12)));
    Matrix out = Matrix::Zero(grad_rows.rows(), grad_rows.cols());
    std::vector<std::size_t> order(cols);
    for (Eigen::Index i = 0; i < grad_rows.rows(); ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto row = grad_rows.row(i);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(row(static_cast<Eigen::Index>(a))) > std::abs(row(static_cast<Eigen::Index>(b)));
        });
        for (std::size_t r = 0; r < keep && r < cols; ++r) {
            const auto j = static_cast<Eigen::Index>(order[r]);
            out(i, j) = row(j);
        }
    }
    return out;
}

SoftTargets cae_soft_labels(const Labels& labels, std::size_t n_classes, double alpha, std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError("cae_soft_labels: need at least 2 classes");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("cae_soft_labels: alpha must lie in [0, 1]");
    // Sattolo's shuffle yields a single n-cycle, hence a derangement.
    std::vector<int> perm(n_classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {0xCAE}));
    for (std::size_t i = n_classes - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }

    SoftTargets out;
    out.n_classes = n_classes;
    out.output_to_class.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) out.output_to_class[static_cast<std::size_t>(perm[c])] = static_cast<int>(c);

    const double spread = alpha / static_cast<double>(n_classes - 1);
    out.targets = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n_classes), spread);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("cae_soft_labels: label out of range");
        out.targets(static_cast<Eigen::Index>(i), perm[static_cast<std::size_t>(y)]) = 1.0 - alpha;
    }
    return out;
}

SoftTargets rle_extend(const Labels& labels, std::size_t n_classes, std::size_t extra_dims, double noise_scale,
                       std::uint64_t seed) {
    if (!(noise_scale >= 0)) throw ConfigError("rle_extend: noise_scale must be >= 0");
    SoftTargets out;
    out.n_classes = n_classes;
    out.output_to_class.resize(n_classes);
    std::iota(out.output_to_class.begin(), out.output_to_class.end(), 0);
    const auto width = static_cast<Eigen::Index>(n_classes + extra_dims);
    out.targets = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), width);
    std::mt19937_64 rng(derive_seed(seed, {0x41E}));
    std::uniform_real_distribution<double> noise(0.0, noise_scale);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("rle_extend: label out of range");
        const auto r = static_cast<Eigen::Index>(i);
        out.targets(r, y) = 1.0;
        for (auto j = static_cast<Eigen::Index>(n_classes); j < width; ++j)
            out.targets(r, j) = noise_scale > 0 ? noise(rng) : 0.0;
        out.targets.row(r) /= out.targets.row(r).sum();
    }
    return out;
}

Matrix apply_gradient_defenses(const std::vector<DefenseConfig>& stack, Matrix grad_rows, std::uint64_t seed) {
    std::uint64_t idx = 0;
    for (const auto& d : stack) {
        const auto layer_seed = derive_seed(seed, {idx++});
        std::visit(overloaded{[&](const GradClip& p) { grad_rows = clip_gradient(grad_rows, p.max_norm); },
                              [&](const DpGaussian& p) { grad_rows = dp_gaussian(grad_rows, p.clip, p.sigma, layer_seed); },
                              [&](const GradCompress& p) { grad_rows = compress_topk(grad_rows, p.keep_ratio); },
                              [](const CaeLabels&) {}, [](const RleLabels&) {}},
                   d.params);
    }
    return grad_rows;
}

}  // namespace vfl::defense
