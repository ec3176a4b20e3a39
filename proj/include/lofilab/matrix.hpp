#pragma once

// Small dense row-major matrix used throughout the toy pipeline and the
// fidelity kernels. Deliberately minimal: no expression templates, no BLAS.

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

namespace lofilab {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;  // row-major, rows*cols

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimensions");
    }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return v.size(); }
    bool operator==(const Mat&) const = default;
};

// Plain double matmul, k ascending. This accumulation order is part of the
// library contract: the fidelity kernels follow the same order so that the
// full-fidelity path is bit-comparable against straight-line loops.
inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

// FNV-1a over the raw bit patterns; used for determinism checks.
inline std::uint64_t checksum_bits(std::span<const double> xs) {
    std::uint64_t h = 1469598103934665603ull;
    for (double x : xs) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    }
    return h;
}

inline std::uint64_t checksum_bits(const Mat& m) { return checksum_bits(std::span<const double>(m.v)); }

}  // namespace lofilab
