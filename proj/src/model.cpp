#include "sortnet/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sortnet/rng.hpp"

namespace sortnet {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'K', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("mlp_load: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ofstream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("mlp_load: truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

std::size_t Mlp::num_params() const {
    std::size_t c = 0;
    for (int l = 0; l < num_layers(); ++l) c += weights[l].data.size() + biases[l].size();
    return c;
}

std::vector<double> Mlp::params_flat() const {
    std::vector<double> flat;
    flat.reserve(num_params());
    for (int l = 0; l < num_layers(); ++l) {
        flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
        flat.insert(flat.end(), biases[l].begin(), biases[l].end());
    }
    return flat;
}

void Mlp::set_params_flat(const std::vector<double>& flat) {
    if (flat.size() != num_params()) throw std::invalid_argument("set_params_flat: size mismatch");
    std::size_t at = 0;
    for (int l = 0; l < num_layers(); ++l) {
        std::copy(flat.begin() + at, flat.begin() + at + weights[l].data.size(), weights[l].data.begin());
        at += weights[l].data.size();
        std::copy(flat.begin() + at, flat.begin() + at + biases[l].size(), biases[l].begin());
        at += biases[l].size();
    }
}

Mlp mlp_init(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output dims");
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("mlp_init: dims must be positive");
    Mlp mlp;
    mlp.dims = dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(fan_out, 0.0);
    }
    return mlp;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x_batch, MlpCache* cache) {
    if (x_batch.cols != mlp.dims.front()) throw std::invalid_argument("mlp_forward: input width mismatch");
    const int batch = x_batch.rows;
    if (cache) {
        cache->input = x_batch;
        cache->preacts.clear();
        cache->activations.clear();
    }
    Matrix act = x_batch;
    for (int l = 0; l < mlp.num_layers(); ++l) {
        const Matrix& w = mlp.weights[l];
        Matrix z(batch, w.rows);
        for (int b = 0; b < batch; ++b) {
            const double* in = act.row(b);
            double* out = z.row(b);
            for (int o = 0; o < w.rows; ++o) {
                const double* wr = w.row(o);
                double s = mlp.biases[l][o];
                for (int i = 0; i < w.cols; ++i) s += wr[i] * in[i];
                out[o] = s;
            }
        }
        if (cache) cache->preacts.push_back(z);
        const bool hidden = l + 1 < mlp.num_layers();
        if (hidden) {
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        }
        if (cache) cache->activations.push_back(z);
        act = std::move(z);
    }
    return act;
}

MlpGradients mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& out_grads) {
    const int layers = mlp.num_layers();
    if (static_cast<int>(cache.preacts.size()) != layers) throw std::invalid_argument("mlp_backward: cache mismatch");
    if (out_grads.rows != cache.input.rows || out_grads.cols != mlp.dims.back())
        throw std::invalid_argument("mlp_backward: output grad shape mismatch");

    const int batch = out_grads.rows;
    MlpGradients g;
    g.dweights.reserve(layers);
    g.dbiases.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        g.dweights.emplace_back(mlp.weights[l].rows, mlp.weights[l].cols);
        g.dbiases.emplace_back(mlp.biases[l].size(), 0.0);
    }

    Matrix delta = out_grads; // dLoss/d(preact of current layer)
    for (int l = layers - 1; l >= 0; --l) {
        if (l + 1 < layers) {
            // ReLU mask of this layer's preactivation; subgradient at 0 is 0
            const Matrix& z = cache.preacts[l];
            for (std::size_t i = 0; i < delta.data.size(); ++i)
                if (z.data[i] <= 0.0) delta.data[i] = 0.0;
        }
        const Matrix& in = l == 0 ? cache.input : cache.activations[l - 1];
        Matrix& dw = g.dweights[l];
        auto& db = g.dbiases[l];
        for (int b = 0; b < batch; ++b) {
            const double* dr = delta.row(b);
            const double* ir = in.row(b);
            for (int o = 0; o < dw.rows; ++o) {
                const double d = dr[o];
                if (d == 0.0) continue;
                double* dwr = dw.row(o);
                for (int i = 0; i < dw.cols; ++i) dwr[i] += d * ir[i];
                db[o] += d;
            }
        }
        // propagate to the previous activation: delta_prev = delta * W
        Matrix prev(batch, mlp.weights[l].cols);
        for (int b = 0; b < batch; ++b) {
            const double* dr = delta.row(b);
            double* pr = prev.row(b);
            for (int o = 0; o < mlp.weights[l].rows; ++o) {
                const double d = dr[o];
                if (d == 0.0) continue;
                const double* wr = mlp.weights[l].row(o);
                for (int i = 0; i < mlp.weights[l].cols; ++i) pr[i] += d * wr[i];
            }
        }
        delta = std::move(prev);
    }
    g.dinput = std::move(delta);
    return g;
}

std::vector<double> MlpGradients::flat() const {
    std::vector<double> flat;
    for (std::size_t l = 0; l < dweights.size(); ++l) {
        flat.insert(flat.end(), dweights[l].data.begin(), dweights[l].data.end());
        flat.insert(flat.end(), dbiases[l].begin(), dbiases[l].end());
    }
    return flat;
}

void mlp_save(const Mlp& mlp, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mlp_save: cannot open " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(mlp.dims.size()));
    for (int d : mlp.dims) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : mlp.params_flat()) write_f64(os, v);
    if (!os) throw std::runtime_error("mlp_save: write failed");
}

Mlp mlp_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("mlp_load: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("mlp_load: bad magic");
    const auto version = read_u32(is);
    if (version != kVersion) throw std::runtime_error("mlp_load: unsupported version");
    const auto ndims = read_u32(is);
    if (ndims < 2 || ndims > 64) throw std::runtime_error("mlp_load: bad layer count");
    std::vector<int> dims(ndims);
    for (auto& d : dims) d = static_cast<int>(read_u32(is));
    Mlp mlp = mlp_init(dims, 0);
    std::vector<double> flat(mlp.num_params());
    for (double& v : flat) v = read_f64(is);
    mlp.set_params_flat(flat);
    return mlp;
}

} // namespace sortnet
