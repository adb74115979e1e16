#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sortnet {

// Minimal dense row-major matrix. Sizes here are small (n <= 1024 wires,
// MLP layers of a few hundred units), so no BLAS backend is needed.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols != static_cast<int>(x.size())) throw std::invalid_argument("matvec: shape mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

} // namespace sortnet
