#include "sortnet/sigmoid.hpp"

#include <cmath>
#include <stdexcept>

namespace sortnet {

namespace {

void require_finite(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("sigmoid: non-finite input");
}

// overflow-safe logistic of the already temperature-scaled argument
double logistic_raw(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_raw_deriv(double z) {
    const double s = logistic_raw(z);
    return s * (1.0 - s);
}

} // namespace

void SigmoidSpec::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("sigmoid: beta must be positive");
    if (kind == SigmoidKind::logistic_art) {
        if (!(art_lambda >= 0.0 && art_lambda <= 1.0)) throw std::invalid_argument("sigmoid: art_lambda must be in [0,1]");
        if (!(art_eps > 0.0)) throw std::invalid_argument("sigmoid: art_eps must be positive");
    }
}

double art(double x, double lambda, double eps) {
    require_finite(x);
    if (x == 0.0) return 0.0;
    return x / (std::pow(std::fabs(x), lambda) + eps);
}

double art_deriv(double x, double lambda, double eps) {
    require_finite(x);
    // d/dx x (|x|^l + e)^-1 = ((1-l)|x|^l + e) / (|x|^l + e)^2
    const double p = (lambda == 0.0) ? 1.0 : (x == 0.0 ? 0.0 : std::pow(std::fabs(x), lambda));
    const double denom = p + eps;
    return ((1.0 - lambda) * p + eps) / (denom * denom);
}

double sigmoid_eval(const SigmoidSpec& spec, double x) {
    spec.validate();
    require_finite(x);
    const double z = spec.beta * x;
    switch (spec.kind) {
    case SigmoidKind::logistic:
        return logistic_raw(z);
    case SigmoidKind::logistic_art:
        return logistic_raw(spec.beta * art(x, spec.art_lambda, spec.art_eps));
    case SigmoidKind::reciprocal:
        return 0.5 * (2.0 * z) / (1.0 + 2.0 * std::fabs(z)) + 0.5;
    case SigmoidKind::cauchy:
        return std::atan(z) / M_PI + 0.5;
    case SigmoidKind::optimal:
        if (z < -0.25) return -1.0 / (16.0 * z);
        if (z > 0.25) return 1.0 - 1.0 / (16.0 * z);
        return z + 0.5;
    }
    throw std::logic_error("sigmoid: unknown kind");
}

double sigmoid_deriv(const SigmoidSpec& spec, double x) {
    spec.validate();
    require_finite(x);
    const double z = spec.beta * x;
    switch (spec.kind) {
    case SigmoidKind::logistic:
        return spec.beta * logistic_raw_deriv(z);
    case SigmoidKind::logistic_art: {
        const double phi = art(x, spec.art_lambda, spec.art_eps);
        return spec.beta * logistic_raw_deriv(spec.beta * phi) * art_deriv(x, spec.art_lambda, spec.art_eps);
    }
    case SigmoidKind::reciprocal: {
        const double d = 1.0 + 2.0 * std::fabs(z);
        return spec.beta / (d * d);
    }
    case SigmoidKind::cauchy:
        return spec.beta / (M_PI * (1.0 + z * z));
    case SigmoidKind::optimal:
        if (std::fabs(z) <= 0.25) return spec.beta;
        return spec.beta / (16.0 * z * z);
    }
    throw std::logic_error("sigmoid: unknown kind");
}

double unit_lipschitz_beta(SigmoidKind kind) {
    switch (kind) {
    case SigmoidKind::logistic: return 4.0;   // max sigma' = beta/4
    case SigmoidKind::reciprocal: return 1.0; // max f' = beta
    case SigmoidKind::cauchy: return M_PI;    // max f' = beta/pi
    case SigmoidKind::optimal: return 1.0;    // linear branch slope beta
    case SigmoidKind::logistic_art:
        throw std::invalid_argument("unit_lipschitz_beta: not defined for logistic_art");
    }
    throw std::logic_error("sigmoid: unknown kind");
}

SigmoidKind sigmoid_kind_from_string(std::string_view name) {
    if (name == "logistic") return SigmoidKind::logistic;
    if (name == "logistic_art") return SigmoidKind::logistic_art;
    if (name == "reciprocal") return SigmoidKind::reciprocal;
    if (name == "cauchy") return SigmoidKind::cauchy;
    if (name == "optimal") return SigmoidKind::optimal;
    throw std::invalid_argument("unknown sigmoid kind: " + std::string(name));
}

std::string to_string(SigmoidKind kind) {
    switch (kind) {
    case SigmoidKind::logistic: return "logistic";
    case SigmoidKind::logistic_art: return "logistic_art";
    case SigmoidKind::reciprocal: return "reciprocal";
    case SigmoidKind::cauchy: return "cauchy";
    case SigmoidKind::optimal: return "optimal";
    }
    return "?";
}

} // namespace sortnet
