#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sortnet/matrix.hpp"

namespace sortnet {

// Fully connected network with ReLU hidden layers and an identity head;
// forward and backward are written out by hand.
struct Mlp {
    std::vector<int> dims;        // layer widths, including input and output
    std::vector<Matrix> weights;  // weights[l] is dims[l+1] x dims[l]
    std::vector<std::vector<double>> biases;

    int num_layers() const { return static_cast<int>(weights.size()); }
    std::size_t num_params() const;

    std::vector<double> params_flat() const;
    void set_params_flat(const std::vector<double>& flat);
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic per seed.
Mlp mlp_init(const std::vector<int>& dims, std::uint64_t seed);

struct MlpCache {
    Matrix input;                  // batch x dims[0]
    std::vector<Matrix> preacts;   // per layer, batch x dims[l+1]
    std::vector<Matrix> activations; // post-ReLU (hidden) / identity (head)
};

// x_batch is batch x dims[0]; returns batch x dims.back(). cache, when
// given, holds everything backward needs.
Matrix mlp_forward(const Mlp& mlp, const Matrix& x_batch, MlpCache* cache = nullptr);

struct MlpGradients {
    std::vector<Matrix> dweights;
    std::vector<std::vector<double>> dbiases;
    Matrix dinput;

    std::vector<double> flat() const;
};

// out_grads is dLoss/d(outputs), batch x dims.back(). ReLU subgradient at 0
// is 0.
MlpGradients mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& out_grads);

// Flat little-endian checkpoint: magic "SSKM", version, layer count, dims,
// then raw 64-bit parameter floats.
void mlp_save(const Mlp& mlp, const std::string& path);
Mlp mlp_load(const std::string& path);

} // namespace sortnet
