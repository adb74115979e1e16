#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sortnet {

// Deterministic RNG used throughout the toolkit. All transforms are written
// out explicitly (std:: distributions are implementation-defined, which would
// break the bit-identical-output contract of the CLI).
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi]
    long uniform_int(long lo, long hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long>(eng_() % span);
    }

    double gaussian() {
        // Box-Muller; u clamped away from 0 to keep log finite
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        const double v = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
    }

    double cauchy() { return std::tan(M_PI * (uniform() - 0.5)); }

    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

  private:
    std::mt19937_64 eng_;
};

} // namespace sortnet
