#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vfl/data.hpp"
#include "vfl/engine.hpp"
#include "vfl/errors.hpp"
#include "vfl/info.hpp"

using namespace vfl;
using namespace vfl::info;

namespace {

JointTable random_joint(std::mt19937_64& rng, std::size_t nx, std::size_t ny) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    JointTable j{nx, ny, std::vector<double>(nx * ny)};
    double total = 0.0;
    for (auto& p : j.probs) {
        p = u(rng) < 0.2 ? 0.0 : u(rng);
        total += p;
    }
    if (total == 0.0) {
        j.probs[0] = 1.0;
        total = 1.0;
    }
    for (auto& p : j.probs) p /= total;
    return j;
}

std::vector<std::vector<double>> nested(const JointTable& j) {
    std::vector<std::vector<double>> p(j.n_x, std::vector<double>(j.n_y));
    for (std::size_t x = 0; x < j.n_x; ++x)
        for (std::size_t y = 0; y < j.n_y; ++y) p[x][y] = j(x, y);
    return p;
}

Matrix identity_transition(std::size_t n) { return Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)); }

}  // namespace

TEST_CASE("exact entropy") {
    CHECK(exact_entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(exact_entropy(std::vector<double>{0.0, 1.0, 0.0}) == 0.0);
    CHECK(exact_entropy(std::vector<double>{0.25, 0.75}) == doctest::Approx(0.811278).epsilon(1e-6));
    CHECK(exact_entropy(std::vector<double>{0.25, 0.75}) ==
          doctest::Approx(-0.25 * std::log2(0.25) - 0.75 * std::log2(0.75)).epsilon(1e-15));
    CHECK_THROWS_AS(exact_entropy(std::vector<double>{0.5, 0.6}), DataError);
    CHECK_THROWS_AS(exact_entropy(std::vector<double>{1.5, -0.5}), DataError);
}

TEST_CASE("exact mutual information") {
    const JointTable product{2, 3, {0.1, 0.2, 0.1, 0.15, 0.3, 0.15}};
    CHECK(std::abs(exact_mi(product)) < 1e-12);
    const JointTable diag{2, 2, {0.5, 0.0, 0.0, 0.5}};
    CHECK(exact_mi(diag) == doctest::Approx(1.0).epsilon(1e-12));
    const JointTable sym{2, 2, {0.4, 0.1, 0.1, 0.4}};
    CHECK(std::abs(exact_mi(sym) - 0.278072) < 1e-6);
    CHECK(std::abs(exact_mi(sym) - oracle::mi_bits(nested(sym))) < 1e-14);

    CHECK_THROWS_AS(exact_mi(JointTable{2, 2, {0.4, 0.1, 0.1, 0.3}}), DataError);
    CHECK_THROWS_AS(exact_mi(JointTable{1, 2, {1.2, -0.2}}), DataError);
    CHECK_THROWS_AS(exact_mi(JointTable{2, 2, {1.0}}), DataError);
}

TEST_CASE("entropy identity, symmetry and bounds on random joints") {
    std::mt19937_64 rng(123);
    for (int t = 0; t < 200; ++t) {
        const auto j = random_joint(rng, 1 + rng() % 6, 1 + rng() % 6);
        const double mi = exact_mi(j);
        const auto py = j.marginal_y();
        CHECK(std::abs(mi - (exact_entropy(py) - conditional_entropy(j))) <= 1e-12);
        CHECK(std::abs(mi - exact_mi(j.transposed())) <= 1e-12);
        CHECK(std::abs(mi - oracle::mi_bits(nested(j))) <= 1e-12);
        CHECK(mi >= 0.0);
        CHECK(mi <= std::min(exact_entropy(py), exact_entropy(j.marginal_x())) + 1e-12);
    }
}

TEST_CASE("binned MI on a perfect predictor equals label entropy") {
    const Labels y{0, 1, 2, 2, 1, 0, 0, 0};
    Matrix onehot = Matrix::Zero(8, 3);
    for (std::size_t i = 0; i < y.size(); ++i) onehot(static_cast<Eigen::Index>(i), y[i]) = 1.0;
    const double h = exact_entropy(std::vector<double>{0.5, 0.25, 0.25});
    for (std::size_t bins : {2, 3, 30, 1000}) {
        const auto est = binned_mi(onehot, y, bins);
        CHECK(std::abs(est.value - h) <= 1e-9);
        CHECK(est.n_samples == 8);
        CHECK(est.n_bins == bins);
    }
}

TEST_CASE("binned MI on independent activations is near zero") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix act(10000, 2);
    Labels y(10000);
    for (Eigen::Index i = 0; i < act.rows(); ++i) {
        act(i, 0) = n(rng);
        act(i, 1) = n(rng);
        y[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 10);
    }
    CHECK(binned_mi(act, y, 10).value <= 0.15);
    CHECK(binned_mi(act.col(0), y, 10).value <= 0.15);
}

TEST_CASE("binned MI edge cases") {
    const Matrix act = Matrix::Random(20, 3);
    CHECK(binned_mi(act, Labels(20, 4), 30).value == 0.0);
    CHECK_THROWS_AS(binned_mi(Matrix(0, 3), Labels{}, 10), DataError);
    CHECK_THROWS_AS(binned_mi(act, Labels(19, 0), 10), ShapeError);
    CHECK_THROWS_AS(binned_mi(act, Labels(20, 0), 1), ConfigError);

    // A constant column contributes nothing.
    Matrix with_const(6, 2);
    with_const << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
    const Labels y{0, 0, 0, 1, 1, 1};
    CHECK(binned_mi(with_const, y, 2).value == doctest::Approx(binned_mi(with_const.col(0), y, 2).value).epsilon(1e-15));
    CHECK(binned_mi(with_const, y, 2).value == doctest::Approx(1.0));
}

TEST_CASE("binned MI matches an independent quantiser") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t N = 3000;
    Matrix act(N, 2);
    Labels y(N);
    for (std::size_t i = 0; i < N; ++i) {
        y[i] = static_cast<int>(i % 4);
        act(static_cast<Eigen::Index>(i), 0) = n(rng) + y[i];
        act(static_cast<Eigen::Index>(i), 1) = n(rng) * 0.5 - y[i];
    }
    for (std::size_t bins : {2, 5, 15, 30}) {
        std::vector<long> sym(N);
        for (std::size_t i = 0; i < N; ++i) {
            long key = 0;
            for (Eigen::Index c = 0; c < 2; ++c) {
                const double lo = act.col(c).minCoeff(), hi = act.col(c).maxCoeff();
                const double u = (act(static_cast<Eigen::Index>(i), c) - lo) / (hi - lo);
                const long b = std::min(static_cast<long>(std::floor(u * static_cast<double>(bins))), static_cast<long>(bins) - 1);
                key = key * static_cast<long>(bins) + b;
            }
            sym[i] = key;
        }
        CHECK(binned_mi(act, y, bins).value == doctest::Approx(oracle::empirical_mi(sym, y)).epsilon(1e-12));
    }
}

TEST_CASE("coarser binning never increases the estimate") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        Matrix act(500, 3);
        Labels y(500);
        for (Eigen::Index i = 0; i < 500; ++i) {
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 5);
            for (Eigen::Index c = 0; c < 3; ++c) act(i, c) = n(rng) + 0.3 * y[static_cast<std::size_t>(i)] * c;
        }
        CHECK(binned_mi(act, y, 15).value <= binned_mi(act, y, 30).value + 1e-9);
        CHECK(binned_mi(act, y, 5).value <= binned_mi(act, y, 10).value + 1e-9);
        CHECK(binned_mi(act, y, 2).value <= binned_mi(act, y, 8).value + 1e-9);
    }
}

TEST_CASE("MI profiles of trained and untrained models") {
    const auto pd = data::partition(data::gen_synthetic(1500, 20, 10, 6.0, 3), 1, 3);
    engine::VflConfig cfg;
    cfg.split = {nn::mlp_spec(20, {16, 16, 16}, 10), -2};
    cfg.n_parties = 1;
    cfg.epochs = 0;
    cfg.batch_size = 32;
    cfg.lr = 0.05;
    cfg.seed = 3;
    const auto untrained = engine::train_vfl(cfg, pd);
    const auto p0 = mi_profile(untrained.state, pd, 30);
    REQUIRE(p0.parties.size() == 1);
    CHECK(p0.parties[0].size() == 2);
    CHECK(p0.top.size() == 2);
    CHECK(p0.party_inputs.size() == 1);
    for (const auto& e : p0.parties[0]) CHECK((std::isfinite(e.value) && e.value >= 0.0));
    for (const auto& e : p0.top) CHECK((std::isfinite(e.value) && e.value >= 0.0));

    cfg.epochs = 20;
    const auto trained = engine::train_vfl(cfg, pd);
    const auto p = mi_profile(trained.state, pd, default_bins);
    CHECK(p.top.back().value >= p.party_inputs[0].value - 1e-9);
    CHECK(p.top.back().n_bins == default_bins);
    CHECK_THROWS_AS(mi_profile(trained.state, data::partition(data::gen_synthetic(100, 20, 10, 6.0, 3), 2, 3), 30),
                    ShapeError);
}

TEST_CASE("chains of identities are lossless and a constant label channel carries nothing") {
    MarkovChainSpec c;
    c.branches.push_back({{0.2, 0.3, 0.5}, {identity_transition(3), identity_transition(3)}});
    c.lumping = identity_transition(3);
    c.top_transitions = {identity_transition(3)};
    c.to_label = identity_transition(3);
    const auto seq = chain_mi_sequence(c);
    const double h = exact_entropy(std::vector<double>{0.2, 0.3, 0.5});
    REQUIRE(seq.branches.size() == 1);
    REQUIRE(seq.branches[0].size() == 3);
    REQUIRE(seq.top.size() == 2);
    for (double v : seq.branches[0]) CHECK(v == doctest::Approx(h).epsilon(1e-12));
    for (double v : seq.top) CHECK(v == doctest::Approx(h).epsilon(1e-12));

    c.to_label = Matrix::Constant(3, 2, 0.5);
    const auto flat = chain_mi_sequence(c);
    for (double v : flat.branches[0]) CHECK(std::abs(v) < 1e-12);
    for (double v : flat.top) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("chain MI agrees with full-joint enumeration") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const std::size_t k = 1 + seed % 3;
        const auto chain = random_chain(seed, k, 2, 2, 3);
        chain.validate();
        const auto got = chain_mi_sequence(chain);
        const auto want = oracle::chain_brute_force(chain);
        REQUIRE(got.branches.size() == k);
        for (std::size_t i = 0; i < k; ++i) {
            REQUIRE(got.branches[i].size() == want.branches[i].size());
            for (std::size_t j = 0; j < got.branches[i].size(); ++j)
                CHECK(std::abs(got.branches[i][j] - want.branches[i][j]) < 1e-12);
        }
        REQUIRE(got.top.size() == want.top.size());
        for (std::size_t j = 0; j < got.top.size(); ++j) CHECK(std::abs(got.top[j] - want.top[j]) < 1e-12);
    }
}

TEST_CASE("random chains are valid and not degenerate") {
    double largest = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto chain = random_chain(seed, 2, 3, 2, 4);
        CHECK_NOTHROW(chain.validate());
        CHECK(chain.branches.size() == 2);
        CHECK(chain.branches[0].transitions.size() == 3);
        CHECK(chain.top_transitions.size() == 1);
        const auto seq = chain_mi_sequence(chain);
        largest = std::max(largest, seq.top.back());
    }
    CHECK(largest > 0.05);
    CHECK(random_chain(4, 2, 3, 2, 4).lumping == random_chain(4, 2, 3, 2, 4).lumping);
}

TEST_CASE("chain validation and capacity") {
    MarkovChainSpec c;
    c.branches.push_back({{0.5, 0.5}, {Matrix::Constant(2, 2, 0.6)}});
    c.lumping = identity_transition(2);
    c.to_label = identity_transition(2);
    CHECK_THROWS_AS(chain_mi_sequence(c), DataError);

    MarkovChainSpec big;
    for (int i = 0; i < 3; ++i) big.branches.push_back({std::vector<double>(101, 1.0 / 101), {}});
    big.lumping = Matrix::Constant(101 * 101 * 101, 1, 1.0);
    big.to_label = Matrix::Constant(1, 1, 1.0);
    CHECK_THROWS_AS(chain_mi_sequence(big), CapacityError);
}
