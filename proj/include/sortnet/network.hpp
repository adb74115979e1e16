#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sortnet {

enum class NetworkKind { odd_even, bitonic };

enum class SwapDirection { ascending, descending };

// One compare-and-swap wire pair. Ascending places the minimum on lo.
struct Comparator {
    int lo = 0;
    int hi = 0;
    SwapDirection dir = SwapDirection::ascending;
};

// Layered comparator list; within a layer no wire appears twice, so every
// layer can be executed in parallel. The same object drives both the hard
// and the relaxed execution.
struct SortingNetwork {
    int n = 0;
    NetworkKind kind = NetworkKind::odd_even;
    std::vector<std::vector<Comparator>> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }
    std::size_t num_comparators() const;
};

// Odd-even needs n >= 1; bitonic needs n a power of two ("unsupported size"
// otherwise). Odd-even has n layers, bitonic log2(n)(log2(n)+1)/2.
SortingNetwork build_network(NetworkKind kind, int n);

struct HardSortResult {
    std::vector<double> values; // non-descending
    std::vector<int> ranks;     // ranks[i] = output position of input i
};

// Exact execution; swaps on strict inequality only, so equal elements keep
// their relative order through each comparator.
HardSortResult hard_sort(const SortingNetwork& net, std::span<const double> x);

NetworkKind network_kind_from_string(std::string_view name);
std::string to_string(NetworkKind kind);

} // namespace sortnet
