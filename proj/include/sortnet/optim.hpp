#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sortnet/matrix.hpp"
#include "sortnet/model.hpp"
#include "sortnet/rng.hpp"

namespace sortnet {

enum class CurvatureKind { elementwise_hessian, empirical_hessian, empirical_fisher };
enum class LossKind { mse, smce, bce, sbce, custom };

// Configuration for the Newton-loss surrogate gradient at the model/loss
// boundary. For LossKind::custom the caller supplies the gradient and (for
// the element-wise/empirical Hessian variants) curvature callbacks.
struct NewtonLossSpec {
    CurvatureKind curvature = CurvatureKind::empirical_fisher;
    double damping = 1e-4; // Tikhonov
    LossKind loss = LossKind::mse;
    std::function<std::vector<double>(std::span<const double>, std::span<const double>)> custom_grad;
    std::function<Matrix(std::span<const double>, std::span<const double>)> custom_hessian;
};

// Either a dense symmetric matrix or a diagonal.
struct Curvature {
    Matrix dense;                  // used when diag is empty
    std::vector<double> diagonal;  // used when non-empty

    static Curvature from_dense(Matrix m) { return {std::move(m), {}}; }
    static Curvature from_diagonal(std::vector<double> d) { return {{}, std::move(d)}; }
};

// z* = y - (curvature + damping I)^{-1} grad via a direct solve; z* carries
// no gradient dependence on y. A singular system with damping = 0 raises an
// error advising damping > 0.
std::vector<double> newton_target(std::span<const double> y, std::span<const double> grad,
                                  const Curvature& curvature, double damping);

// Per-sample surrogate gradients y - z*. The empirical variants average the
// curvature across the batch before the solve. Closed forms are implemented
// for MSE, SMCE, BCE and SBCE; targets[i] is the probability/one-hot vector
// p (or the regression target for MSE).
std::vector<std::vector<double>> newton_loss_grad(const NewtonLossSpec& spec,
                                                  const std::vector<std::vector<double>>& outputs,
                                                  const std::vector<std::vector<double>>& targets);

// Per-loss building blocks (exposed for the oracle tests).
std::vector<double> loss_gradient(LossKind kind, std::span<const double> y, std::span<const double> target);
Curvature loss_curvature(LossKind kind, std::span<const double> y, std::span<const double> target);

enum class NoiseKind { gaussian, cauchy };

struct ResgroSpec {
    int num_samples = 64; // K
    int pool_size = 64;   // M >= K; bootstrapped when M > K
    double noise_scale = 0.1;
    NoiseKind noise = NoiseKind::gaussian;
};

// Sampling greedy target: draws M perturbations around y, evaluates the
// (possibly non-differentiable) loss on each, and returns either the argmin
// (M == K) or the bootstrapped mixture with exact rank weights (M > K).
std::vector<double> resgro_target(std::span<const double> y,
                                  const std::function<double(std::span<const double>)>& loss_fn,
                                  const ResgroSpec& spec, Rng& rng);

// Same with caller-provided perturbations (one vector per pool entry).
std::vector<double> resgro_target_with_noise(std::span<const double> y,
                                             const std::function<double(std::span<const double>)>& loss_fn,
                                             int num_samples,
                                             const std::vector<std::vector<double>>& noise);

// w_r = C(M-r, K-1) / C(M, K) for ranks r = 1..M: the probability that the
// r-th best pool entry is the minimum of a uniform K-subset drawn without
// replacement.
std::vector<double> resgro_rank_weights(int pool_size, int num_samples);

// z-step with unit step size on loss_grad_fn, then a theta-step with step lr
// on 1/2 ||z* - f(x)||^2. Equals one direct gradient step on loss o f.
void two_stage_gd_step(Mlp& mlp, const Matrix& x_batch,
                       const std::function<Matrix(const Matrix&)>& loss_grad_fn, double lr);

enum class OptKind { sgd, adaptive_moments };

struct OptimizerState {
    OptKind kind = OptKind::sgd;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<double> m1;
    std::vector<double> m2;

    void step(std::vector<double>& params, std::span<const double> grads);
};

// (concordant - discordant) / (n(n-1)/2) on strict pairwise orderings.
double kendall_tau(std::span<const double> pred_scores, std::span<const int> truth_ranks);

} // namespace sortnet
