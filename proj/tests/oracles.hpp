#pragma once

// Test-only oracles, independent of the library implementation paths they
// check: central finite differences, reference sorting, brute-force subset
// enumeration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace oracles {

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline std::vector<double> central_diff_grad(const std::function<double(std::vector<double>)>& f,
                                             std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// ||a - b|| / max(||a|| + ||b||, floor)
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    double d2 = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d2 += (a[i] - b[i]) * (a[i] - b[i]);
        a2 += a[i] * a[i];
        b2 += b[i] * b[i];
    }
    return std::sqrt(d2) / std::max(std::sqrt(a2) + std::sqrt(b2), floor);
}

// ranks via a reference comparison sort (stable, ties by index)
inline std::vector<int> reference_ranks(std::span<const double> x) {
    std::vector<int> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
    std::vector<int> ranks(x.size());
    for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r);
    return ranks;
}

// all K-subsets of {0..M-1}, via simple recursion (M <= ~10 in tests)
inline void for_each_subset(int pool, int k, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> pick;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(pick.size()) == k) {
            visit(pick);
            return;
        }
        for (int i = start; i <= pool - (k - static_cast<int>(pick.size())); ++i) {
            pick.push_back(i);
            rec(i + 1);
            pick.pop_back();
        }
    };
    rec(0);
}

} // namespace oracles
