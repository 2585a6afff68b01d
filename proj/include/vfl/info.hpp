#pragma once

// Mutual information in bits: exact values over finite joints, a binning
// estimator for layer activations, and an exact evaluator for lumped Markov
// chains (parallel branches merging into one chain that ends at the label).

#include <cstdint>
#include <span>
#include <vector>

#include "vfl/data.hpp"
#include "vfl/engine.hpp"
#include "vfl/matrix.hpp"

namespace vfl::info {

/// p(x, y) as an n_x by n_y table, row-major.
struct JointTable {
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    std::vector<double> probs;

    double operator()(std::size_t x, std::size_t y) const { return probs[x * n_y + y]; }
    /// Throws DataError unless entries are nonnegative and sum to 1 within 1e-12.
    void validate() const;
    JointTable transposed() const;
    std::vector<double> marginal_x() const;
    std::vector<double> marginal_y() const;
};

struct MIEstimate {
    double value = 0.0;  ///< bits
    std::size_t n_samples = 0;
    std::size_t n_bins = 0;
};

/// Shannon entropy in bits; 0 log 0 = 0.
double exact_entropy(std::span<const double> dist);

/// H(Y | X) in bits.
double conditional_entropy(const JointTable& joint);

double exact_mi(const JointTable& joint);

/// Equal-width binning of each column over its observed range; the binned row
/// vector is one discrete symbol. Returns the plug-in MI between symbols and labels.
MIEstimate binned_mi(const Matrix& activations, const Labels& labels, std::size_t n_bins);

inline constexpr std::size_t default_bins = 30;

struct MIProfile {
    std::vector<MIEstimate> party_inputs;          ///< raw features of each party
    std::vector<std::vector<MIEstimate>> parties;  ///< per party, one per bottom layer output
    std::vector<MIEstimate> top;                   ///< one per top layer output
};

MIProfile mi_profile(const engine::TrainedState& state, const data::PartitionedDataset& data, std::size_t n_bins);

/// One passive party's chain X -> T_1 -> ... -> T_n.
struct ChainBranch {
    std::vector<double> input;        ///< distribution of X
    std::vector<Matrix> transitions;  ///< row-stochastic, stage j-1 -> j
};

struct MarkovChainSpec {
    std::vector<ChainBranch> branches;
    /// p(S_1 | T_n^1, ..., T_n^k); rows enumerate the terminal product alphabet in
    /// mixed radix with branch 0 most significant.
    Matrix lumping;
    std::vector<Matrix> top_transitions;  ///< S_j -> S_{j+1}
    Matrix to_label;                      ///< S_m -> Y

    void validate() const;
};

struct ChainMiSequences {
    /// Per branch: I(X^i;Y), I(T_1^i;Y), ..., I(T_n^i;Y).
    std::vector<std::vector<double>> branches;
    /// I(S_1;Y), ..., I(S_m;Y).
    std::vector<double> top;
};

inline constexpr std::size_t max_chain_states = 1'000'000;

/// Exact I(.;Y) for every node of the chain by marginalising the joint law.
ChainMiSequences chain_mi_sequence(const MarkovChainSpec& chain);

/// Random chain with k branches of depth n, m top stages and alphabets in
/// [2, max_alphabet]. Transition rows mix a sparse random pattern with a
/// near-deterministic one so MI values spread over their range.
MarkovChainSpec random_chain(std::uint64_t seed, std::size_t k, std::size_t n, std::size_t m, std::size_t max_alphabet);

}  // namespace vfl::info
