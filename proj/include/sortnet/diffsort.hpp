#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sortnet/matrix.hpp"
#include "sortnet/network.hpp"
#include "sortnet/sigmoid.hpp"

namespace sortnet {

// Ground-truth ordering for ranking supervision. ranks[i] is the rank of the
// element at input position i; the matrix form Q satisfies Q x = sort(x).
struct GroundTruthPermutation {
    std::vector<int> ranks;

    static GroundTruthPermutation from_ranks(std::vector<int> ranks);
    int size() const { return static_cast<int>(ranks.size()); }
    Matrix to_matrix() const;
};

struct RelaxedSwap {
    double min = 0.0;
    double max = 0.0;
    double alpha = 0.0; // f(b - a)
};

// min_f(a,b) = a f(b-a) + b f(a-b); the pair sum is preserved.
RelaxedSwap relaxed_swap(const SigmoidSpec& spec, double a, double b);

struct RelaxedSortResult {
    std::vector<double> sorted_values;        // x_hat = P x
    std::vector<std::vector<double>> alphas;  // [layer][comparator], aligned with net.layers
    std::optional<Matrix> perm;               // P, accumulated from sparse layer factors
};

// Executes the network on progressively relaxed values. P is only
// materialized on demand; each layer contributes a sparse doubly-stochastic
// factor and P = P_L ... P_2 P_1.
RelaxedSortResult relaxed_sort(const SortingNetwork& net, const SigmoidSpec& spec,
                               std::span<const double> x, bool materialize_p);

// Mean over columns of the cross-entropy between a P column (distribution
// over ranks) and the one-hot column of Q. Entries are floored at 1e-12
// before the log.
double ranking_ce_loss(const Matrix& p, const GroundTruthPermutation& truth);

// d ranking_ce_loss(relaxed_sort(x).P, Q) / dx, computed in reverse layer
// order from cached forward state (both the matrix-product path and the
// dependence of every alpha on upstream relaxed values).
std::vector<double> backward(const SortingNetwork& net, const SigmoidSpec& spec,
                             std::span<const double> x, const GroundTruthPermutation& truth);

// General vector-Jacobian product: gradient of an arbitrary scalar loss with
// upstream gradient grad_perm = dLoss/dP. Shared by the ranking loss and the
// top-k losses.
std::vector<double> backward_from_perm_grad(const SortingNetwork& net, const SigmoidSpec& spec,
                                            std::span<const double> x, const Matrix& grad_perm);

struct RankingMetrics {
    double em = 0.0;  // exact-match fraction
    double ew = 0.0;  // element-wise rank accuracy
    double em5 = 0.0; // exact match over regrouped tuples of 5
};

// Hard argsort of each score vector against the ground truth. EM5 regroups
// each tuple into consecutive chunks of 5 positions and scores the induced
// orderings; requires n >= 5.
RankingMetrics metrics_em_ew(const std::vector<std::vector<double>>& pred_scores,
                             const std::vector<GroundTruthPermutation>& truth,
                             bool with_em5 = true);

// ranks[i] = rank of scores[i] under ascending order, ties broken by index.
std::vector<int> argsort_ranks(std::span<const double> scores);

} // namespace sortnet
