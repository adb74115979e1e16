#include "sortnet/network.hpp"

#include <numeric>
#include <stdexcept>

namespace sortnet {

namespace {

bool is_power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

SortingNetwork build_odd_even(int n) {
    SortingNetwork net;
    net.n = n;
    net.kind = NetworkKind::odd_even;
    net.layers.resize(n);
    for (int l = 0; l < n; ++l) {
        for (int i = l % 2; i + 1 < n; i += 2) {
            net.layers[l].push_back({i, i + 1, SwapDirection::ascending});
        }
    }
    return net;
}

// Classic iterative bitonic construction: merge blocks of doubling size; a
// wire pair is (i, i^j); the block bit (i & k) selects the orientation.
SortingNetwork build_bitonic(int n) {
    SortingNetwork net;
    net.n = n;
    net.kind = NetworkKind::bitonic;
    for (int k = 2; k <= n; k <<= 1) {
        for (int j = k >> 1; j > 0; j >>= 1) {
            std::vector<Comparator> layer;
            for (int i = 0; i < n; ++i) {
                const int partner = i ^ j;
                if (partner <= i) continue;
                const auto dir = (i & k) == 0 ? SwapDirection::ascending : SwapDirection::descending;
                layer.push_back({i, partner, dir});
            }
            net.layers.push_back(std::move(layer));
        }
    }
    return net;
}

} // namespace

std::size_t SortingNetwork::num_comparators() const {
    std::size_t c = 0;
    for (const auto& layer : layers) c += layer.size();
    return c;
}

SortingNetwork build_network(NetworkKind kind, int n) {
    if (n < 1) throw std::invalid_argument("build_network: n must be >= 1");
    switch (kind) {
    case NetworkKind::odd_even:
        return build_odd_even(n);
    case NetworkKind::bitonic:
        if (!is_power_of_two(n)) throw std::invalid_argument("build_network: unsupported size (bitonic needs a power of two)");
        return build_bitonic(n);
    }
    throw std::logic_error("build_network: unknown kind");
}

HardSortResult hard_sort(const SortingNetwork& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.n) throw std::invalid_argument("hard_sort: length mismatch");
    std::vector<double> v(x.begin(), x.end());
    std::vector<int> pos(net.n); // pos[wire] = original index carried by the wire
    std::iota(pos.begin(), pos.end(), 0);
    for (const auto& layer : net.layers) {
        for (const auto& c : layer) {
            const bool swap = c.dir == SwapDirection::ascending ? v[c.lo] > v[c.hi] : v[c.hi] > v[c.lo];
            if (swap) {
                std::swap(v[c.lo], v[c.hi]);
                std::swap(pos[c.lo], pos[c.hi]);
            }
        }
    }
    HardSortResult out;
    out.values = std::move(v);
    out.ranks.assign(net.n, 0);
    for (int r = 0; r < net.n; ++r) out.ranks[pos[r]] = r;
    return out;
}

NetworkKind network_kind_from_string(std::string_view name) {
    if (name == "odd_even") return NetworkKind::odd_even;
    if (name == "bitonic") return NetworkKind::bitonic;
    throw std::invalid_argument("unknown network kind: " + std::string(name));
}

std::string to_string(NetworkKind kind) {
    return kind == NetworkKind::odd_even ? "odd_even" : "bitonic";
}

} // namespace sortnet
