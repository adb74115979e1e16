#include "sortnet/data.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sortnet/model.hpp"

namespace sortnet {

namespace {

constexpr std::uint32_t kLabelMagic = 2049;
constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint64_t kScorerSeed = 0x5eedf00dULL;

std::uint32_t read_be_u32(std::ifstream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("load_idx: truncated header in " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

// tanh MLP d -> 16 -> out with weights from a fixed seed; the same scorer for
// every caller so data sets are reproducible across runs
std::vector<double> hidden_net_eval(std::span<const double> features, int out_dim) {
    static thread_local std::vector<Mlp> cache;
    Mlp* net = nullptr;
    for (auto& m : cache)
        if (m.dims.front() == static_cast<int>(features.size()) && m.dims.back() == out_dim) net = &m;
    if (net == nullptr) {
        cache.push_back(mlp_init({static_cast<int>(features.size()), 16, out_dim}, kScorerSeed));
        net = &cache.back();
    }
    // manual forward with tanh on the hidden layer
    const Matrix& w0 = net->weights[0];
    std::vector<double> h(16);
    for (int o = 0; o < 16; ++o) {
        double s = net->biases[0][o];
        for (int i = 0; i < w0.cols; ++i) s += w0(o, i) * features[i];
        h[o] = std::tanh(s);
    }
    const Matrix& w1 = net->weights[1];
    std::vector<double> out(out_dim);
    for (int o = 0; o < out_dim; ++o) {
        double s = net->biases[1][o];
        for (int i = 0; i < 16; ++i) s += w1(o, i) * h[i];
        out[o] = s;
    }
    return out;
}

} // namespace

IdxFile load_idx(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_idx: cannot open " + path);
    IdxFile f;
    f.magic = read_be_u32(is, path);
    if (f.magic != kLabelMagic && f.magic != kImageMagic)
        throw std::runtime_error("load_idx: bad magic " + std::to_string(f.magic) + " in " + path);
    const std::size_t ndims = f.magic & 0xff; // low byte of the magic encodes the rank
    if (f.magic == kLabelMagic && ndims != 1)
        throw std::runtime_error("load_idx: label file must have exactly one dimension");
    if (f.magic == kImageMagic && ndims != 3)
        throw std::runtime_error("load_idx: image file must have exactly three dimensions");
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        f.dims.push_back(read_be_u32(is, path));
        total *= f.dims.back();
    }
    f.payload.resize(total);
    is.read(reinterpret_cast<char*>(f.payload.data()), static_cast<std::streamsize>(total));
    if (!is || static_cast<std::size_t>(is.gcount()) != total)
        throw std::runtime_error("load_idx: truncated payload in " + path);
    return f;
}

FourDigitBatch make_four_digit(Rng& rng, const IdxFile& images, const IdxFile& labels, int count) {
    if (count < 1) throw std::invalid_argument("make_four_digit: count must be >= 1");
    if (images.magic != kImageMagic || labels.magic != kLabelMagic)
        throw std::invalid_argument("make_four_digit: wrong file kinds");
    const std::size_t num = images.dims[0];
    if (num == 0 || labels.dims[0] != num) throw std::invalid_argument("make_four_digit: empty or mismatched source");
    const int h = static_cast<int>(images.dims[1]);
    const int w = static_cast<int>(images.dims[2]);

    FourDigitBatch out;
    out.images = Matrix(count, h * w * 4);
    out.values.resize(count);
    for (int s = 0; s < count; ++s) {
        int value = 0;
        for (int digit = 0; digit < 4; ++digit) {
            const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(num) - 1));
            value = value * 10 + labels.payload[idx];
            const std::uint8_t* src = images.payload.data() + idx * h * w;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    out.images(s, r * (4 * w) + digit * w + c) = src[r * w + c] / 255.0;
        }
        out.values[s] = value;
    }
    return out;
}

double synth_hidden_score(std::span<const double> features) {
    return hidden_net_eval(features, 1)[0];
}

RankingBatch synth_ranking(Rng& rng, int d, int n, int tuples) {
    if (d < 1 || n < 1 || tuples < 1) throw std::invalid_argument("synth_ranking: d, n, tuples must be >= 1");
    RankingBatch batch;
    batch.n = n;
    batch.d = d;
    batch.inputs.reserve(tuples);
    batch.truth.reserve(tuples);
    std::vector<double> scores(n);
    std::vector<double> feat(d);
    for (int t = 0; t < tuples; ++t) {
        Matrix x(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                feat[j] = rng.uniform(-1.0, 1.0);
                x(i, j) = feat[j];
            }
            scores[i] = synth_hidden_score(feat);
        }
        batch.inputs.push_back(std::move(x));
        batch.truth.push_back(GroundTruthPermutation::from_ranks(argsort_ranks(scores)));
    }
    return batch;
}

ClassBatch synth_classification(Rng& rng, int d, int num_classes, int count) {
    if (d < 1 || num_classes < 2 || count < 1)
        throw std::invalid_argument("synth_classification: bad dimensions");
    ClassBatch batch;
    batch.inputs = Matrix(count, d);
    batch.labels.resize(count);
    std::vector<double> feat(d);
    for (int s = 0; s < count; ++s) {
        for (int j = 0; j < d; ++j) {
            feat[j] = rng.uniform(-1.0, 1.0);
            batch.inputs(s, j) = feat[j];
        }
        const auto logits = hidden_net_eval(feat, num_classes);
        int best = 0;
        for (int c = 1; c < num_classes; ++c)
            if (logits[c] > logits[best]) best = c;
        batch.labels[s] = best;
    }
    return batch;
}

} // namespace sortnet
