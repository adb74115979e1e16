#include "sortnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sortnet {

namespace {

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> y) {
    double mx = y[0];
    for (double v : y) mx = std::max(mx, v);
    std::vector<double> q(y.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        q[i] = std::exp(y[i] - mx);
        denom += q[i];
    }
    for (double& v : q) v /= denom;
    return q;
}

// symmetric positive(-ish) definite solve; plain Gaussian elimination with
// partial pivoting is plenty at these sizes (n <= 32)
std::vector<double> solve_dense(Matrix a, std::vector<double> b, double damping) {
    const int n = a.rows;
    for (int i = 0; i < n; ++i) a(i, i) += damping;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
        if (std::fabs(a(pivot, col)) < 1e-12) {
            throw std::runtime_error("newton_target: singular curvature; use damping > 0");
        }
        if (pivot != col) {
            for (int j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
            std::swap(b[col], b[pivot]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

std::vector<double> solve_curvature(const Curvature& c, std::span<const double> grad, double damping) {
    if (!c.diagonal.empty()) {
        std::vector<double> d(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double h = c.diagonal[i] + damping;
            if (std::fabs(h) < 1e-12) throw std::runtime_error("newton_target: singular curvature; use damping > 0");
            d[i] = grad[i] / h;
        }
        return d;
    }
    if (c.dense.rows != static_cast<int>(grad.size()) || c.dense.rows != c.dense.cols)
        throw std::invalid_argument("newton_target: curvature shape mismatch");
    return solve_dense(c.dense, std::vector<double>(grad.begin(), grad.end()), damping);
}

Matrix outer(std::span<const double> g) {
    const int n = static_cast<int>(g.size());
    Matrix f(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) f(i, j) = g[i] * g[j];
    return f;
}

} // namespace

std::vector<double> newton_target(std::span<const double> y, std::span<const double> grad,
                                  const Curvature& curvature, double damping) {
    if (y.size() != grad.size()) throw std::invalid_argument("newton_target: dimension mismatch");
    if (damping < 0.0) throw std::invalid_argument("newton_target: damping must be >= 0");
    auto delta = solve_curvature(curvature, grad, damping);
    std::vector<double> z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) z[i] = y[i] - delta[i];
    return z;
}

std::vector<double> loss_gradient(LossKind kind, std::span<const double> y, std::span<const double> target) {
    if (y.size() != target.size()) throw std::invalid_argument("loss_gradient: dimension mismatch");
    std::vector<double> g(y.size());
    switch (kind) {
    case LossKind::mse:
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] - target[i];
        return g;
    case LossKind::smce: {
        const auto q = softmax(y);
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = q[i] - target[i];
        return g;
    }
    case LossKind::bce:
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = -target[i] / y[i] + (1.0 - target[i]) / (1.0 - y[i]);
        return g;
    case LossKind::sbce:
        for (std::size_t i = 0; i < y.size(); ++i) g[i] = logistic(y[i]) - target[i];
        return g;
    case LossKind::custom:
        throw std::invalid_argument("loss_gradient: custom loss needs a callback");
    }
    throw std::logic_error("loss_gradient: unknown kind");
}

Curvature loss_curvature(LossKind kind, std::span<const double> y, std::span<const double> target) {
    switch (kind) {
    case LossKind::mse:
        return Curvature::from_diagonal(std::vector<double>(y.size(), 1.0));
    case LossKind::smce: {
        const auto q = softmax(y);
        Matrix h(static_cast<int>(y.size()), static_cast<int>(y.size()));
        for (std::size_t i = 0; i < y.size(); ++i) {
            for (std::size_t j = 0; j < y.size(); ++j) h(i, j) = -q[i] * q[j];
            h(i, i) += q[i];
        }
        return Curvature::from_dense(std::move(h));
    }
    case LossKind::bce: {
        std::vector<double> d(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            d[i] = target[i] / (y[i] * y[i]) + (1.0 - target[i]) / ((1.0 - y[i]) * (1.0 - y[i]));
        return Curvature::from_diagonal(std::move(d));
    }
    case LossKind::sbce: {
        std::vector<double> d(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double s = logistic(y[i]);
            d[i] = s * (1.0 - s);
        }
        return Curvature::from_diagonal(std::move(d));
    }
    case LossKind::custom:
        throw std::invalid_argument("loss_curvature: custom loss needs a callback");
    }
    throw std::logic_error("loss_curvature: unknown kind");
}

std::vector<std::vector<double>> newton_loss_grad(const NewtonLossSpec& spec,
                                                  const std::vector<std::vector<double>>& outputs,
                                                  const std::vector<std::vector<double>>& targets) {
    if (outputs.empty() || outputs.size() != targets.size())
        throw std::invalid_argument("newton_loss_grad: empty or mismatched batch");
    const std::size_t batch = outputs.size();
    const int dim = static_cast<int>(outputs.front().size());

    auto grad_of = [&](std::size_t s) {
        if (spec.loss == LossKind::custom) {
            if (!spec.custom_grad) throw std::invalid_argument("newton_loss_grad: missing custom gradient");
            return spec.custom_grad(outputs[s], targets[s]);
        }
        return loss_gradient(spec.loss, outputs[s], targets[s]);
    };
    auto hessian_of = [&](std::size_t s) {
        if (spec.loss == LossKind::custom) {
            if (!spec.custom_hessian) throw std::invalid_argument("newton_loss_grad: missing custom curvature");
            return Curvature::from_dense(spec.custom_hessian(outputs[s], targets[s]));
        }
        return loss_curvature(spec.loss, outputs[s], targets[s]);
    };

    std::vector<std::vector<double>> grads(batch);
    for (std::size_t s = 0; s < batch; ++s) grads[s] = grad_of(s);

    std::vector<std::vector<double>> out(batch);
    switch (spec.curvature) {
    case CurvatureKind::elementwise_hessian: {
        for (std::size_t s = 0; s < batch; ++s) {
            const auto z = newton_target(outputs[s], grads[s], hessian_of(s), spec.damping);
            out[s].resize(dim);
            for (int i = 0; i < dim; ++i) out[s][i] = outputs[s][i] - z[i];
        }
        return out;
    }
    case CurvatureKind::empirical_hessian: {
        // average curvature across the batch, then per-sample solves
        Matrix mean(dim, dim);
        for (std::size_t s = 0; s < batch; ++s) {
            const auto c = hessian_of(s);
            if (!c.diagonal.empty()) {
                for (int i = 0; i < dim; ++i) mean(i, i) += c.diagonal[i];
            } else {
                for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += c.dense.data[i];
            }
        }
        for (double& v : mean.data) v /= static_cast<double>(batch);
        const auto avg = Curvature::from_dense(std::move(mean));
        for (std::size_t s = 0; s < batch; ++s) {
            const auto z = newton_target(outputs[s], grads[s], avg, spec.damping);
            out[s].resize(dim);
            for (int i = 0; i < dim; ++i) out[s][i] = outputs[s][i] - z[i];
        }
        return out;
    }
    case CurvatureKind::empirical_fisher: {
        Matrix fisher(dim, dim);
        for (std::size_t s = 0; s < batch; ++s) {
            const auto f = outer(grads[s]);
            for (std::size_t i = 0; i < fisher.data.size(); ++i) fisher.data[i] += f.data[i];
        }
        for (double& v : fisher.data) v /= static_cast<double>(batch);
        const auto avg = Curvature::from_dense(std::move(fisher));
        for (std::size_t s = 0; s < batch; ++s) {
            const auto z = newton_target(outputs[s], grads[s], avg, spec.damping);
            out[s].resize(dim);
            for (int i = 0; i < dim; ++i) out[s][i] = outputs[s][i] - z[i];
        }
        return out;
    }
    }
    throw std::logic_error("newton_loss_grad: unknown curvature kind");
}

std::vector<double> resgro_rank_weights(int pool_size, int num_samples) {
    if (num_samples < 1 || num_samples > pool_size) throw std::invalid_argument("resgro: need 1 <= K <= M");
    // w_r = C(M-r, K-1) / C(M, K), computed with a running ratio to stay exact
    // in double for M <= ~50
    std::vector<double> w(pool_size, 0.0);
    // C(M-1, K-1) / C(M, K) = K / M
    double cur = static_cast<double>(num_samples) / pool_size;
    for (int r = 1; r <= pool_size - num_samples + 1; ++r) {
        w[r - 1] = cur;
        // C(M-r-1, K-1) = C(M-r, K-1) * (M-r-K+1) / (M-r)
        cur *= static_cast<double>(pool_size - r - num_samples + 1) / static_cast<double>(pool_size - r);
    }
    return w;
}

std::vector<double> resgro_target_with_noise(std::span<const double> y,
                                             const std::function<double(std::span<const double>)>& loss_fn,
                                             int num_samples,
                                             const std::vector<std::vector<double>>& noise) {
    const int pool = static_cast<int>(noise.size());
    if (num_samples > pool) throw std::invalid_argument("resgro: K > M");
    if (num_samples < 1) throw std::invalid_argument("resgro: K must be >= 1");
    const std::size_t dim = y.size();

    std::vector<double> losses(pool);
    std::vector<double> z(dim);
    for (int i = 0; i < pool; ++i) {
        if (noise[i].size() != dim) throw std::invalid_argument("resgro: noise dimension mismatch");
        for (std::size_t j = 0; j < dim; ++j) z[j] = y[j] + noise[i][j];
        losses[i] = loss_fn(z);
    }

    std::vector<int> order(pool);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return losses[a] < losses[b]; });

    std::vector<double> out(y.begin(), y.end());
    if (num_samples == pool) {
        for (std::size_t j = 0; j < dim; ++j) out[j] += noise[order[0]][j];
        return out;
    }
    const auto w = resgro_rank_weights(pool, num_samples);
    for (int r = 0; r < pool; ++r) {
        if (w[r] == 0.0) break; // weights vanish beyond rank M-K+1
        const auto& eps = noise[order[r]];
        for (std::size_t j = 0; j < dim; ++j) out[j] += w[r] * eps[j];
    }
    return out;
}

std::vector<double> resgro_target(std::span<const double> y,
                                  const std::function<double(std::span<const double>)>& loss_fn,
                                  const ResgroSpec& spec, Rng& rng) {
    if (!(spec.noise_scale > 0.0)) throw std::invalid_argument("resgro: noise_scale must be positive");
    if (spec.num_samples < 1) throw std::invalid_argument("resgro: K must be >= 1");
    if (spec.num_samples > spec.pool_size) throw std::invalid_argument("resgro: K > M");
    std::vector<std::vector<double>> noise(spec.pool_size, std::vector<double>(y.size()));
    for (auto& eps : noise)
        for (double& v : eps)
            v = spec.noise_scale * (spec.noise == NoiseKind::gaussian ? rng.gaussian() : rng.cauchy());
    return resgro_target_with_noise(y, loss_fn, spec.num_samples, noise);
}

void two_stage_gd_step(Mlp& mlp, const Matrix& x_batch,
                       const std::function<Matrix(const Matrix&)>& loss_grad_fn, double lr) {
    MlpCache cache;
    const Matrix y = mlp_forward(mlp, x_batch, &cache);

    // z-step with unit step size: z* = y - dLoss/dy
    const Matrix lg = loss_grad_fn(y);
    if (!lg.same_shape(y)) throw std::invalid_argument("two_stage_gd_step: loss grad shape mismatch");
    Matrix zstar(y.rows, y.cols);
    for (std::size_t i = 0; i < y.data.size(); ++i) zstar.data[i] = y.data[i] - lg.data[i];

    // theta-step on 1/2 ||z* - f(x)||^2: output gradient is y - z*
    Matrix out_grads(y.rows, y.cols);
    for (std::size_t i = 0; i < y.data.size(); ++i) out_grads.data[i] = y.data[i] - zstar.data[i];
    const auto grads = mlp_backward(mlp, cache, out_grads);

    auto params = mlp.params_flat();
    const auto gflat = grads.flat();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * gflat[i];
    mlp.set_params_flat(params);
}

void OptimizerState::step(std::vector<double>& params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer step: shape mismatch");
    if (!(lr > 0.0)) throw std::invalid_argument("optimizer step: learning rate must be positive");
    if (kind == OptKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
        return;
    }
    if (m1.empty()) {
        m1.assign(params.size(), 0.0);
        m2.assign(params.size(), 0.0);
    }
    if (m1.size() != params.size()) throw std::invalid_argument("optimizer step: state size mismatch");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grads[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = m1[i] / bc1;
        const double vhat = m2[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double kendall_tau(std::span<const double> pred_scores, std::span<const int> truth_ranks) {
    const int n = static_cast<int>(pred_scores.size());
    if (n < 2) throw std::invalid_argument("kendall_tau: need n >= 2");
    if (static_cast<int>(truth_ranks.size()) != n) throw std::invalid_argument("kendall_tau: size mismatch");
    long concordant = 0, discordant = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double ds = pred_scores[i] - pred_scores[j];
            const int dr = truth_ranks[i] - truth_ranks[j];
            if (ds > 0.0 && dr > 0) ++concordant;
            else if (ds < 0.0 && dr < 0) ++concordant;
            else if (ds > 0.0 && dr < 0) ++discordant;
            else if (ds < 0.0 && dr > 0) ++discordant;
        }
    }
    return static_cast<double>(concordant - discordant) / (0.5 * n * (n - 1));
}

} // namespace sortnet
