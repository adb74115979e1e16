#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sortnet/diffsort.hpp"
#include "sortnet/matrix.hpp"
#include "sortnet/network.hpp"
#include "sortnet/sigmoid.hpp"

namespace sortnet {

// Distribution P_K over k = 1..k_max driving the top-k loss.
struct TopKDistribution {
    std::vector<double> probs;

    int k_max() const { return static_cast<int>(probs.size()); }
    void validate() const; // entries >= 0, sum 1 within 1e-9
    static TopKDistribution parse(std::string_view comma_separated);
};

struct TopKConfig {
    int k_max = 5;
    int m = 16;           // differentiable-ranking subset size
    bool mixture = false; // split softmax CE for the top-1 component
    double temperature = 1.0;
    SigmoidSpec sigmoid{};
    NetworkKind network = NetworkKind::odd_even;
};

// Top k rows of the relaxed permutation matrix, computed back to front: the
// k x n slice of the last layer factor is multiplied through the stored
// sparse factors, O(n k) per layer. work (optional) counts the multiply
// operations for the scaling test.
Matrix topk_rows(const SortingNetwork& net, const SigmoidSpec& spec, std::span<const double> x,
                 int k, std::uint64_t* work = nullptr);

// -log sum_k P_K(k) sum_{j<=k} P_{j, pos(y)} over the descending-ranked
// top-m score subset (the true class is routed into the subset if absent).
// With mixture enabled the top-1 component is replaced by a softmax CE and
// the remaining mass covers the k >= 2 partial sums.
double topk_loss(std::span<const double> scores, int true_class, const TopKDistribution& pk,
                 const TopKConfig& config);

// Gradient of topk_loss wrt the class scores. Classes outside the m-subset
// receive exactly zero (the selection is non-differentiable routing).
std::vector<double> topk_loss_grad(std::span<const double> scores, int true_class,
                                   const TopKDistribution& pk, const TopKConfig& config);

} // namespace sortnet
