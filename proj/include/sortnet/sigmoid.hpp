#pragma once

#include <string>
#include <string_view>

namespace sortnet {

// Relaxation functions for continuous conditional swaps. All are odd-symmetric
// sigmoids f: R -> [0,1] with f(0) = 1/2; beta is the inverse temperature.
enum class SigmoidKind {
    logistic,     // 1 / (1 + exp(-beta x))
    logistic_art, // logistic applied after the activation replacement x -> x / (|x|^lambda + eps)
    reciprocal,   // 0.5 * (2 beta x) / (1 + 2 beta |x|) + 0.5
    cauchy,       // atan(beta x) / pi + 0.5
    optimal,      // piecewise linear/hyperbolic, minimal error bound among monotonic swaps
};

struct SigmoidSpec {
    SigmoidKind kind = SigmoidKind::logistic;
    double beta = 1.0;
    double art_lambda = 0.25; // only used by logistic_art
    double art_eps = 1e-10;   // only used by logistic_art

    // Throws std::invalid_argument on out-of-range parameters.
    void validate() const;
};

// Activation replacement x / (|x|^lambda + eps); pushes values toward +-1.
double art(double x, double lambda, double eps);
double art_deriv(double x, double lambda, double eps);

// f(beta x); rejects non-finite x.
double sigmoid_eval(const SigmoidSpec& spec, double x);

// Exact analytic derivative d/dx f(beta x). At the two joints of the optimal
// sigmoid the linear-branch value (beta) is returned.
double sigmoid_deriv(const SigmoidSpec& spec, double x);

// The beta for which max_x f'(x) = 1. Not defined for logistic_art.
double unit_lipschitz_beta(SigmoidKind kind);

SigmoidKind sigmoid_kind_from_string(std::string_view name);
std::string to_string(SigmoidKind kind);

} // namespace sortnet
