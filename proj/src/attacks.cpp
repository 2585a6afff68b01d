#include "vfl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "vfl/errors.hpp"

namespace vfl::attack {

void AuxiliaryData::validate(std::size_t n_classes) const {
    if (indices.empty()) throw DataError("auxiliary set is empty");
    if (indices.size() != labels.size() || static_cast<std::size_t>(features.rows()) != labels.size())
        throw ShapeError("auxiliary set fields differ in length");
    std::vector<std::size_t> count(n_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("auxiliary label out of range");
        ++count[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (count[c] == 0) throw DataError("auxiliary set has no sample of class " + std::to_string(c));
}

AuxiliaryData sample_auxiliary(const Matrix& party_features, const Labels& labels, std::size_t n_classes,
                               std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw ConfigError("sample_auxiliary: per_class must be >= 1");
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
            throw DataError("sample_auxiliary: label out of range");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::mt19937_64 rng(derive_seed(seed, {0xA0C5}));
    AuxiliaryData aux;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto take = std::min(per_class, members.size());
        aux.indices.insert(aux.indices.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(aux.indices.begin(), aux.indices.end());
    aux.features = gather_rows(party_features, aux.indices);
    for (auto i : aux.indices) aux.labels.push_back(labels[i]);
    aux.validate(n_classes);
    return aux;
}

double lift_normalize(double raw, std::size_t c_new, std::size_t c_orig) {
    if (c_new < 2 || c_orig < 2) throw ConfigError("lift_normalize: class counts must be >= 2");
    const double rg_new = 1.0 / static_cast<double>(c_new);
    const double rg_orig = 1.0 / static_cast<double>(c_orig);
    return raw / rg_new * rg_orig;
}

double attack_accuracy(const Labels& predicted, const Labels& truth) {
    if (predicted.empty()) throw DataError("attack_accuracy: empty label vectors");
    if (predicted.size() != truth.size()) throw ShapeError("attack_accuracy: label vectors differ in length");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

void score(AttackResult& result, const Labels& truth, std::size_t c_new, std::size_t c_orig) {
    result.raw_accuracy = attack_accuracy(result.predicted, truth);
    result.lift_normalized_accuracy = lift_normalize(result.raw_accuracy, c_new, c_orig);
    result.c_new = c_new;
    result.c_orig = c_orig;
}

namespace {

// Squared distances from every point to every center.
Matrix squared_distances(const Matrix& points, const Matrix& centers) {
    const Eigen::VectorXd pn = points.rowwise().squaredNorm();
    const Eigen::VectorXd cn = centers.rowwise().squaredNorm();
    Matrix d(points.rows(), centers.rows());
    d.noalias() = -2.0 * points * centers.transpose();
    d.colwise() += pn;
    d.rowwise() += cn.transpose();
    return d.cwiseMax(0.0);
}

std::size_t distinct_rows(const Matrix& m, std::size_t stop_at) {
    std::set<std::vector<double>> seen;
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        seen.insert(row);
        if (seen.size() >= stop_at) break;
    }
    return seen.size();
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations,
                    double tolerance) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");
    if (distinct_rows(points, k) < k)
        throw AttackInfeasible("kmeans: fewer distinct points than the " + std::to_string(k) + " requested clusters");

    std::mt19937_64 rng(derive_seed(seed, {0x3EA5}));
    KMeansResult res;
    res.centers.resize(static_cast<Eigen::Index>(k), points.cols());

    // k-means++ seeding
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    res.centers.row(0) = points.row(static_cast<Eigen::Index>(first(rng)));
    Eigen::VectorXd nearest = (points.rowwise() - res.centers.row(0)).rowwise().squaredNorm();
    for (std::size_t c = 1; c < k; ++c) {
        const double total = nearest.sum();
        std::size_t chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest(static_cast<Eigen::Index>(i));
                if (target < 0.0 && nearest(static_cast<Eigen::Index>(i)) > 0.0) {
                    chosen = i;
                    break;
                }
            }
            while (nearest(static_cast<Eigen::Index>(chosen)) <= 0.0) --chosen;
        }
        res.centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(chosen));
        nearest = nearest.cwiseMin((points.rowwise() - res.centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
    }

    res.assignment.assign(n, 0);
    for (res.iterations = 0; res.iterations < max_iterations;) {
        const Matrix d = squared_distances(points, res.centers);
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < d.cols(); ++c)
                if (d(i, c) < d(i, best)) best = c;
            res.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        Matrix sums = Matrix::Zero(res.centers.rows(), res.centers.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(res.assignment[i]) += points.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(res.assignment[i])];
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its center
            const auto r = static_cast<Eigen::Index>(c);
            const Eigen::RowVectorXd updated = sums.row(r) / static_cast<double>(counts[c]);
            moved = std::max(moved, (updated - res.centers.row(r)).norm());
            res.centers.row(r) = updated;
        }
        ++res.iterations;
        if (moved <= tolerance) break;
    }
    // final assignment against the final centers
    const Matrix d = squared_distances(points, res.centers);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < d.cols(); ++c)
            if (d(i, c) < d(i, best)) best = c;
        res.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return res;
}

std::vector<int> label_clusters(const Matrix& centers, const std::vector<int>& assignment,
                                const std::vector<std::size_t>& aux_indices, const Labels& aux_labels,
                                std::size_t n_classes) {
    const auto k = static_cast<std::size_t>(centers.rows());
    std::vector<std::vector<std::size_t>> votes(k, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t a = 0; a < aux_indices.size(); ++a) {
        if (aux_indices[a] >= assignment.size()) throw DataError("auxiliary index outside the observed samples");
        const int y = aux_labels[a];
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DataError("auxiliary label out of range");
        ++votes[static_cast<std::size_t>(assignment[aux_indices[a]])][static_cast<std::size_t>(y)];
    }
    std::vector<int> label(k, -1);
    for (std::size_t c = 0; c < k; ++c) {
        const auto& v = votes[c];
        const auto best = std::max_element(v.begin(), v.end());  // first maximum = smallest class
        if (*best > 0) label[c] = static_cast<int>(best - v.begin());
    }
    const auto named = label;
    for (std::size_t c = 0; c < k; ++c) {
        if (named[c] >= 0) continue;
        double best_dist = std::numeric_limits<double>::infinity();
        int best_label = std::numeric_limits<int>::max();
        for (std::size_t o = 0; o < k; ++o) {
            if (named[o] < 0) continue;
            const double dist = (centers.row(static_cast<Eigen::Index>(c)) - centers.row(static_cast<Eigen::Index>(o))).squaredNorm();
            if (dist < best_dist || (dist == best_dist && named[o] < best_label)) {
                best_dist = dist;
                best_label = named[o];
            }
        }
        if (best_label == std::numeric_limits<int>::max()) throw AttackInfeasible("no cluster holds an auxiliary sample");
        label[c] = best_label;
    }
    return label;
}

namespace {

AttackResult cluster_and_label(const std::string& name, const Matrix& rows, std::size_t n_classes,
                               const AuxiliaryData& aux, std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError(name + ": n_classes must be >= 2");
    if (rows.rows() == 0) throw DataError(name + ": no observations");
    aux.validate(n_classes);
    const auto km = kmeans(rows, n_classes, seed);
    const auto names = label_clusters(km.centers, km.assignment, aux.indices, aux.labels, n_classes);
    AttackResult res;
    res.attack_name = name;
    res.predicted.reserve(km.assignment.size());
    for (int c : km.assignment) res.predicted.push_back(names[static_cast<std::size_t>(c)]);
    return res;
}

}  // namespace

AttackResult cluster_lia(const Matrix& embeddings, std::size_t n_classes, const AuxiliaryData& aux, std::uint64_t seed) {
    return cluster_and_label("cluster", embeddings, n_classes, aux, seed);
}

AttackResult gradient_cluster_lia(const Matrix& gradient_rows, std::size_t n_classes, const AuxiliaryData& aux,
                                  std::uint64_t seed) {
    return cluster_and_label("gradient", gradient_rows, n_classes, aux, seed);
}

AttackResult completion_lia(const nn::Model& bottom, const AuxiliaryData& aux, const Matrix& target_features,
                            std::size_t n_classes, const FineTuneParams& params, std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError("completion: n_classes must be >= 2");
    aux.validate(n_classes);
    if (static_cast<std::size_t>(aux.features.cols()) != bottom.spec.input_dim() ||
        static_cast<std::size_t>(target_features.cols()) != bottom.spec.input_dim())
        throw ShapeError("completion: feature columns do not match the bottom model");
    if (params.batch_size == 0 || !(params.lr > 0)) throw ConfigError("completion: bad fine-tuning parameters");

    // Copy the bottom model and append an inference head.
    nn::Model model = bottom;
    const nn::LayerSpec head{bottom.spec.output_dim(), n_classes, nn::Activation::softmax_at_loss};
    const auto head_init = nn::init_model(nn::ModelSpec{{head}}, derive_seed(seed, {0x4EAD}));
    model.spec.layers.push_back(head);
    model.weights.push_back(head_init.weights.front());
    model.biases.push_back(head_init.biases.front());

    const std::size_t n = aux.size();
    std::mt19937_64 rng(derive_seed(seed, {0xF1E7}));
    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += params.batch_size) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + params.batch_size)));
            Labels y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) y[i] = aux.labels[rows[i]];
            const auto trace = nn::forward(model, gather_rows(aux.features, rows));
            const auto loss = nn::cross_entropy_loss(trace.back(), y);
            if (!std::isfinite(loss.loss)) throw AttackFailed("completion: fine-tuning diverged at epoch " + std::to_string(epoch));
            const auto grads = nn::backward(model, trace, loss.logit_grad);
            model = nn::sgd_step(std::move(model), grads, params.lr);
        }
    }

    AttackResult res;
    res.attack_name = "completion";
    const auto logits = nn::forward(model, target_features).back();
    if (!logits.allFinite()) throw AttackFailed("completion: non-finite predictions");
    res.predicted = argmax_rows(logits, n_classes);
    return res;
}

}  // namespace vfl::attack
