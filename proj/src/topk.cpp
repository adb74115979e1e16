#include "sortnet/topk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sortnet {

namespace {

constexpr double kCollapseFloor = 1e-12;

struct SubsetSelection {
    std::vector<int> indices; // class indices in the subset, descending score
    std::vector<double> scores;
    int pos_y = -1; // position of the true class inside the subset
};

// Top-m scores in descending order (ties by class index); the lowest selected
// entry is replaced by the true class when it would otherwise be missing.
SubsetSelection select_subset(std::span<const double> scores, int true_class, int m) {
    const int n = static_cast<int>(scores.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

    SubsetSelection sel;
    sel.indices.assign(order.begin(), order.begin() + m);
    auto it = std::find(sel.indices.begin(), sel.indices.end(), true_class);
    if (it == sel.indices.end()) {
        sel.indices.back() = true_class;
        sel.pos_y = m - 1;
    } else {
        sel.pos_y = static_cast<int>(it - sel.indices.begin());
    }
    sel.scores.resize(m);
    for (int i = 0; i < m; ++i) sel.scores[i] = scores[sel.indices[i]];
    return sel;
}

struct LossPieces {
    SubsetSelection sel;
    Matrix rows;                  // k_max x m rank rows of the subset, rank 1 = largest score
    std::vector<double> partial;  // partial[k] = sum_{j<=k} rows(j-1, pos_y), k = 1..k_max
    std::vector<double> neg;      // negated subset scores fed to the network
    SortingNetwork net;
};

LossPieces evaluate_pieces(std::span<const double> scores, int true_class,
                           const TopKDistribution& pk, const TopKConfig& config) {
    const int n = static_cast<int>(scores.size());
    pk.validate();
    if (pk.k_max() != config.k_max) throw std::invalid_argument("topk_loss: P_K size differs from k_max");
    if (config.k_max < 1 || config.k_max > config.m || config.m > n)
        throw std::invalid_argument("topk_loss: need 1 <= k_max <= m <= number of classes");
    if (true_class < 0 || true_class >= n) throw std::invalid_argument("topk_loss: true class out of range");

    LossPieces lp;
    lp.sel = select_subset(scores, true_class, config.m);
    lp.net = build_network(config.network, config.m);

    // descending ranking: ascending-sort the negated subset scores
    lp.neg.resize(config.m);
    for (int i = 0; i < config.m; ++i) lp.neg[i] = -lp.sel.scores[i];
    lp.rows = topk_rows(lp.net, config.sigmoid, lp.neg, config.k_max);

    lp.partial.assign(config.k_max + 1, 0.0);
    for (int k = 1; k <= config.k_max; ++k)
        lp.partial[k] = lp.partial[k - 1] + lp.rows(k - 1, lp.sel.pos_y);
    return lp;
}

double softmax_ce(std::span<const double> scores, int target, double temperature) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double denom = 0.0;
    for (double s : scores) denom += std::exp((s - mx) / temperature);
    return -((scores[target] - mx) / temperature - std::log(denom));
}

} // namespace

void TopKDistribution::validate() const {
    if (probs.empty()) throw std::invalid_argument("TopKDistribution: empty");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("TopKDistribution: negative entry");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("TopKDistribution: probabilities must sum to 1");
}

TopKDistribution TopKDistribution::parse(std::string_view comma_separated) {
    TopKDistribution pk;
    std::stringstream ss{std::string(comma_separated)};
    std::string item;
    while (std::getline(ss, item, ',')) pk.probs.push_back(std::stod(item));
    pk.validate();
    return pk;
}

Matrix topk_rows(const SortingNetwork& net, const SigmoidSpec& spec, std::span<const double> x,
                 int k, std::uint64_t* work) {
    const int n = net.n;
    if (k < 1 || k > n) throw std::invalid_argument("topk_rows: k out of range");
    if (static_cast<int>(x.size()) != n) throw std::invalid_argument("topk_rows: length mismatch");

    // forward pass recording the sparse per-layer factors only
    auto res = relaxed_sort(net, spec, x, /*materialize_p=*/false);
    const int num_layers = net.num_layers();
    std::uint64_t ops = 0;

    Matrix m(k, n);
    if (num_layers == 0) {
        for (int r = 0; r < k; ++r) m(r, r) = 1.0;
        if (work) *work = k;
        return m;
    }

    // k x n slice of the last layer factor
    {
        const auto& layer = net.layers[num_layers - 1];
        const auto& alphas = res.alphas[num_layers - 1];
        for (int r = 0; r < k; ++r) m(r, r) = 1.0;
        ops += k;
        for (std::size_t c = 0; c < layer.size(); ++c) {
            const int lo = layer[c].lo, hi = layer[c].hi;
            const double a = alphas[c];
            if (lo < k) {
                m(lo, lo) = a;
                m(lo, hi) = 1.0 - a;
            }
            if (hi < k) {
                m(hi, lo) = 1.0 - a;
                m(hi, hi) = a;
            }
        }
    }

    // multiply backward through layers L-1 .. 1; each factor touches two
    // columns per comparator
    for (int l = num_layers - 2; l >= 0; --l) {
        const auto& layer = net.layers[l];
        const auto& alphas = res.alphas[l];
        for (std::size_t c = 0; c < layer.size(); ++c) {
            const int lo = layer[c].lo, hi = layer[c].hi;
            const double a = alphas[c];
            for (int r = 0; r < k; ++r) {
                const double mlo = m(r, lo), mhi = m(r, hi);
                m(r, lo) = a * mlo + (1.0 - a) * mhi;
                m(r, hi) = (1.0 - a) * mlo + a * mhi;
            }
            ops += 4ull * k;
        }
    }
    if (work) *work = ops;
    return m;
}

double topk_loss(std::span<const double> scores, int true_class, const TopKDistribution& pk,
                 const TopKConfig& config) {
    const auto lp = evaluate_pieces(scores, true_class, pk, config);

    if (!config.mixture) {
        double p = 0.0;
        for (int k = 1; k <= config.k_max; ++k) p += pk.probs[k - 1] * lp.partial[k];
        if (p <= kCollapseFloor) throw std::runtime_error("topk_loss: relaxation collapse (p <= 0)");
        return -std::log(p);
    }

    const double p1 = pk.probs[0];
    double loss = p1 * softmax_ce(lp.sel.scores, lp.sel.pos_y, config.temperature);
    if (p1 < 1.0) {
        double p_rest = 0.0;
        for (int k = 2; k <= config.k_max; ++k) p_rest += pk.probs[k - 1] * lp.partial[k];
        if (p_rest <= kCollapseFloor) throw std::runtime_error("topk_loss: relaxation collapse (p <= 0)");
        loss -= (1.0 - p1) * std::log(p_rest);
    }
    return loss;
}

std::vector<double> topk_loss_grad(std::span<const double> scores, int true_class,
                                   const TopKDistribution& pk, const TopKConfig& config) {
    const int n = static_cast<int>(scores.size());
    const auto lp = evaluate_pieces(scores, true_class, pk, config);
    const int m = config.m;

    // dLoss/drows(j-1, pos_y): row j contributes to every partial sum with
    // k >= j, weighted by the cumulative tail of P_K
    std::vector<double> row_grad(config.k_max + 1, 0.0);
    std::vector<double> subset_grad(m, 0.0);

    if (!config.mixture) {
        double p = 0.0;
        for (int k = 1; k <= config.k_max; ++k) p += pk.probs[k - 1] * lp.partial[k];
        if (p <= kCollapseFloor) throw std::runtime_error("topk_loss_grad: relaxation collapse (p <= 0)");
        double tail = 0.0;
        for (int j = config.k_max; j >= 1; --j) {
            tail += pk.probs[j - 1];
            row_grad[j] = -tail / p;
        }
    } else {
        const double p1 = pk.probs[0];
        if (p1 < 1.0) {
            double p_rest = 0.0;
            for (int k = 2; k <= config.k_max; ++k) p_rest += pk.probs[k - 1] * lp.partial[k];
            if (p_rest <= kCollapseFloor) throw std::runtime_error("topk_loss_grad: relaxation collapse (p <= 0)");
            double tail = 0.0;
            for (int j = config.k_max; j >= 1; --j) {
                if (j >= 2) tail += pk.probs[j - 1];
                row_grad[j] = -(1.0 - p1) * tail / p_rest;
            }
        }
        // softmax CE component over the subset scores
        double mx = lp.sel.scores[0];
        for (double s : lp.sel.scores) mx = std::max(mx, s);
        double denom = 0.0;
        std::vector<double> q(m);
        for (int i = 0; i < m; ++i) {
            q[i] = std::exp((lp.sel.scores[i] - mx) / config.temperature);
            denom += q[i];
        }
        for (int i = 0; i < m; ++i) {
            q[i] /= denom;
            subset_grad[i] += p1 * (q[i] - (i == lp.sel.pos_y ? 1.0 : 0.0)) / config.temperature;
        }
    }

    // backprop the rank-row weights through the relaxed network (negated
    // scores were fed in, so flip the sign at the end)
    Matrix grad_perm(m, m);
    for (int j = 1; j <= config.k_max; ++j) grad_perm(j - 1, lp.sel.pos_y) = row_grad[j];
    const auto gneg = backward_from_perm_grad(lp.net, config.sigmoid, lp.neg, grad_perm);
    for (int i = 0; i < m; ++i) subset_grad[i] -= gneg[i];

    std::vector<double> out(n, 0.0);
    for (int i = 0; i < m; ++i) out[lp.sel.indices[i]] = subset_grad[i];
    return out;
}

} // namespace sortnet
