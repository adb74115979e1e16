#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sortnet/diffsort.hpp"
#include "sortnet/matrix.hpp"
#include "sortnet/rng.hpp"

namespace sortnet {

// Raw IDX container (big-endian header, u8 payload). magic 2049 = labels,
// 2051 = images.
struct IdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

IdxFile load_idx(const std::string& path);

// Four MNIST digits concatenated horizontally to 28 x 112; the sample value
// is the four-digit decimal number. Pixels scaled to [0, 1].
struct FourDigitBatch {
    Matrix images; // count x (28*112)
    std::vector<int> values;
};

FourDigitBatch make_four_digit(Rng& rng, const IdxFile& images, const IdxFile& labels, int count);

// Tuples of n feature vectors with their ground-truth ordering.
struct RankingBatch {
    int n = 0;
    int d = 0;
    std::vector<Matrix> inputs; // per tuple: n x d
    std::vector<GroundTruthPermutation> truth;
};

// Synthetic ranking supervision: inputs uniform in [-1,1]^d, scored by a
// fixed seeded two-layer network of width 16; truth is the argsort of the
// hidden scores (ties broken by index).
RankingBatch synth_ranking(Rng& rng, int d, int n, int tuples);

// The hidden scorer behind synth_ranking (exposed so tests can check the
// truth permutations independently).
double synth_hidden_score(std::span<const double> features);

// Synthetic classification source for the top-k trainer: label = argmax of a
// fixed seeded d -> 16 -> num_classes network.
struct ClassBatch {
    Matrix inputs; // count x d
    std::vector<int> labels;
};

ClassBatch synth_classification(Rng& rng, int d, int num_classes, int count);

} // namespace sortnet
