#include "sortnet/diffsort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sortnet {

namespace {

constexpr double kLogFloor = 1e-12;

void require_finite_vec(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("diffsort: non-finite input");
}

// alpha = f(hi - lo) for ascending comparators and f(lo - hi) for descending
// ones; either way the new lo value is alpha*lo + (1-alpha)*hi.
double comparator_alpha(const SigmoidSpec& spec, const Comparator& c, const std::vector<double>& v) {
    const double diff = c.dir == SwapDirection::ascending ? v[c.hi] - v[c.lo] : v[c.lo] - v[c.hi];
    return sigmoid_eval(spec, diff);
}

void apply_layer_values(const std::vector<Comparator>& layer, const std::vector<double>& alphas,
                        std::vector<double>& v) {
    for (std::size_t k = 0; k < layer.size(); ++k) {
        const auto& c = layer[k];
        const double a = alphas[k];
        const double lo = v[c.lo], hi = v[c.hi];
        v[c.lo] = a * lo + (1.0 - a) * hi;
        v[c.hi] = (1.0 - a) * lo + a * hi;
    }
}

// rows lo/hi of m <- rows lo/hi of (P_l m); P_l is symmetric, so the same
// update also implements m <- P_l^T m.
void apply_layer_rows(const std::vector<Comparator>& layer, const std::vector<double>& alphas, Matrix& m) {
    std::vector<double> tmp(m.cols);
    for (std::size_t k = 0; k < layer.size(); ++k) {
        const auto& c = layer[k];
        const double a = alphas[k];
        double* rlo = m.row(c.lo);
        double* rhi = m.row(c.hi);
        for (int j = 0; j < m.cols; ++j) {
            tmp[j] = a * rlo[j] + (1.0 - a) * rhi[j];
            rhi[j] = (1.0 - a) * rlo[j] + a * rhi[j];
        }
        std::copy(tmp.begin(), tmp.end(), rlo);
    }
}

} // namespace

GroundTruthPermutation GroundTruthPermutation::from_ranks(std::vector<int> ranks) {
    const int n = static_cast<int>(ranks.size());
    std::vector<bool> seen(n, false);
    for (int r : ranks) {
        if (r < 0 || r >= n || seen[r]) throw std::invalid_argument("GroundTruthPermutation: not a permutation");
        seen[r] = true;
    }
    GroundTruthPermutation q;
    q.ranks = std::move(ranks);
    return q;
}

Matrix GroundTruthPermutation::to_matrix() const {
    const int n = size();
    Matrix q(n, n);
    for (int i = 0; i < n; ++i) q(ranks[i], i) = 1.0;
    return q;
}

RelaxedSwap relaxed_swap(const SigmoidSpec& spec, double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("relaxed_swap: non-finite input");
    const double alpha = sigmoid_eval(spec, b - a);
    RelaxedSwap out;
    out.alpha = alpha;
    out.min = a * alpha + b * (1.0 - alpha);
    out.max = b * alpha + a * (1.0 - alpha);
    return out;
}

RelaxedSortResult relaxed_sort(const SortingNetwork& net, const SigmoidSpec& spec,
                               std::span<const double> x, bool materialize_p) {
    if (static_cast<int>(x.size()) != net.n) throw std::invalid_argument("relaxed_sort: length mismatch");
    spec.validate();
    require_finite_vec(x);

    RelaxedSortResult out;
    std::vector<double> v(x.begin(), x.end());
    out.alphas.resize(net.layers.size());
    if (materialize_p) out.perm = Matrix::identity(net.n);

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        auto& alphas = out.alphas[l];
        alphas.resize(layer.size());
        for (std::size_t k = 0; k < layer.size(); ++k) alphas[k] = comparator_alpha(spec, layer[k], v);
        apply_layer_values(layer, alphas, v);
        if (out.perm) apply_layer_rows(layer, alphas, *out.perm);
    }
    out.sorted_values = std::move(v);
    return out;
}

double ranking_ce_loss(const Matrix& p, const GroundTruthPermutation& truth) {
    const int n = truth.size();
    if (p.rows != n || p.cols != n) throw std::invalid_argument("ranking_ce_loss: shape mismatch");
    double loss = 0.0;
    for (int c = 0; c < n; ++c) {
        loss -= std::log(std::max(p(truth.ranks[c], c), kLogFloor));
    }
    return loss / n;
}

std::vector<double> backward_from_perm_grad(const SortingNetwork& net, const SigmoidSpec& spec,
                                            std::span<const double> x, const Matrix& grad_perm) {
    const int n = net.n;
    if (static_cast<int>(x.size()) != n) throw std::invalid_argument("backward: length mismatch");
    if (grad_perm.rows != n || grad_perm.cols != n) throw std::invalid_argument("backward: grad shape mismatch");
    spec.validate();
    require_finite_vec(x);

    const int num_layers = net.num_layers();

    // forward, caching pre-layer values and pre-layer accumulated matrices
    std::vector<std::vector<double>> values(num_layers + 1);
    std::vector<Matrix> accum(num_layers); // accum[l] = P_l ... P_1 applied to I, *before* layer l+1
    std::vector<std::vector<double>> alphas(num_layers);
    values[0].assign(x.begin(), x.end());
    Matrix m = Matrix::identity(n);
    for (int l = 0; l < num_layers; ++l) {
        accum[l] = m; // state before layer l (M^{l-1} in the product)
        const auto& layer = net.layers[l];
        alphas[l].resize(layer.size());
        for (std::size_t k = 0; k < layer.size(); ++k) alphas[l][k] = comparator_alpha(spec, layer[k], values[l]);
        values[l + 1] = values[l];
        apply_layer_values(layer, alphas[l], values[l + 1]);
        apply_layer_rows(layer, alphas[l], m);
    }

    // reverse sweep: H = dLoss/d(accumulated matrix), g = dLoss/d(values)
    Matrix h = grad_perm;
    std::vector<double> g(n, 0.0);
    for (int l = num_layers - 1; l >= 0; --l) {
        const auto& layer = net.layers[l];
        const auto& va = values[l];
        const Matrix& ma = accum[l];

        // per-comparator dLoss/dalpha from both paths, using pre-update g and h
        std::vector<double> dalpha(layer.size());
        for (std::size_t k = 0; k < layer.size(); ++k) {
            const auto& c = layer[k];
            double da = (g[c.lo] - g[c.hi]) * (va[c.lo] - va[c.hi]);
            const double* hlo = h.row(c.lo);
            const double* hhi = h.row(c.hi);
            const double* mlo = ma.row(c.lo);
            const double* mhi = ma.row(c.hi);
            for (int j = 0; j < n; ++j) da += (hlo[j] - hhi[j]) * (mlo[j] - mhi[j]);
            dalpha[k] = da;
        }

        // g <- P_l^T g, h <- P_l^T h (P_l is symmetric)
        for (std::size_t k = 0; k < layer.size(); ++k) {
            const auto& c = layer[k];
            const double a = alphas[l][k];
            const double glo = g[c.lo], ghi = g[c.hi];
            g[c.lo] = a * glo + (1.0 - a) * ghi;
            g[c.hi] = (1.0 - a) * glo + a * ghi;
        }
        apply_layer_rows(layer, alphas[l], h);

        // chain through alpha = f(+-(v_hi - v_lo))
        for (std::size_t k = 0; k < layer.size(); ++k) {
            const auto& c = layer[k];
            const double sign = c.dir == SwapDirection::ascending ? 1.0 : -1.0;
            const double diff = sign * (va[c.hi] - va[c.lo]);
            const double slope = sigmoid_deriv(spec, diff);
            g[c.lo] -= dalpha[k] * sign * slope;
            g[c.hi] += dalpha[k] * sign * slope;
        }
    }
    return g;
}

std::vector<double> backward(const SortingNetwork& net, const SigmoidSpec& spec,
                             std::span<const double> x, const GroundTruthPermutation& truth) {
    if (truth.size() != net.n) throw std::invalid_argument("backward: truth size mismatch");
    auto res = relaxed_sort(net, spec, x, /*materialize_p=*/true);
    const Matrix& p = *res.perm;
    const int n = net.n;
    Matrix grad_perm(n, n);
    for (int c = 0; c < n; ++c) {
        const int r = truth.ranks[c];
        if (p(r, c) > kLogFloor) grad_perm(r, c) = -1.0 / (n * p(r, c));
        // entries at the floor are treated as constant
    }
    return backward_from_perm_grad(net, spec, x, grad_perm);
}

std::vector<int> argsort_ranks(std::span<const double> scores) {
    const int n = static_cast<int>(scores.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    std::vector<int> ranks(n);
    for (int r = 0; r < n; ++r) ranks[order[r]] = r;
    return ranks;
}

RankingMetrics metrics_em_ew(const std::vector<std::vector<double>>& pred_scores,
                             const std::vector<GroundTruthPermutation>& truth, bool with_em5) {
    if (pred_scores.empty() || pred_scores.size() != truth.size())
        throw std::invalid_argument("metrics_em_ew: empty or mismatched batch");
    const int n = truth.front().size();
    if (with_em5 && n < 5) throw std::invalid_argument("metrics_em_ew: EM5 requires n >= 5");

    std::size_t exact = 0, correct_pos = 0, chunks = 0, chunks_exact = 0;
    for (std::size_t s = 0; s < pred_scores.size(); ++s) {
        if (static_cast<int>(pred_scores[s].size()) != n || truth[s].size() != n)
            throw std::invalid_argument("metrics_em_ew: tuple size mismatch");
        const auto pred = argsort_ranks(pred_scores[s]);
        bool all = true;
        for (int i = 0; i < n; ++i) {
            if (pred[i] == truth[s].ranks[i]) ++correct_pos;
            else all = false;
        }
        if (all) ++exact;

        if (with_em5) {
            for (int base = 0; base + 5 <= n; base += 5) {
                std::vector<double> sub_scores(5);
                std::vector<double> sub_truth(5);
                for (int i = 0; i < 5; ++i) {
                    sub_scores[i] = pred_scores[s][base + i];
                    sub_truth[i] = truth[s].ranks[base + i];
                }
                ++chunks;
                if (argsort_ranks(sub_scores) == argsort_ranks(sub_truth)) ++chunks_exact;
            }
        }
    }
    RankingMetrics out;
    const double batch = static_cast<double>(pred_scores.size());
    out.em = exact / batch;
    out.ew = static_cast<double>(correct_pos) / (batch * n);
    out.em5 = with_em5 ? static_cast<double>(chunks_exact) / static_cast<double>(chunks) : 0.0;
    return out;
}

} // namespace sortnet
