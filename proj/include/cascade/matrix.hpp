#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace cascade {

/// Dense row-major matrix. Small helper used throughout; not a linear
/// algebra library, just storage plus the handful of products we need.
template <typename Real>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<Real> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, Real(0)) {}

    Real& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<size_t>(r) * cols + c];
    }
    Real operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<size_t>(r) * cols + c];
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = Real(1);
        return m;
    }

    bool operator==(const Matrix&) const = default;
};

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
    assert(a.cols == b.rows);
    Matrix<Real> out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const Real aik = a(i, k);
            if (aik == Real(0)) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

/// Rank-3 tensor, row-major in the last index.
template <typename Real>
struct Tensor3 {
    int d0 = 0, d1 = 0, d2 = 0;
    std::vector<Real> data;

    Tensor3() = default;
    Tensor3(int a, int b, int c)
        : d0(a), d1(b), d2(c), data(static_cast<size_t>(a) * b * c, Real(0)) {}

    Real& operator()(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
    Real operator()(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * d1 + j) * d2 + k];
    }
};

/// Rank-4 tensor; only used for the dense form of the ratio-split tensor.
template <typename Real>
struct Tensor4 {
    int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
    std::vector<Real> data;

    Tensor4() = default;
    Tensor4(int a, int b, int c, int d)
        : d0(a), d1(b), d2(c), d3(d), data(static_cast<size_t>(a) * b * c * d, Real(0)) {}

    Real& operator()(int i, int j, int k, int m) {
        return data[((static_cast<size_t>(i) * d1 + j) * d2 + k) * d3 + m];
    }
    Real operator()(int i, int j, int k, int m) const {
        return data[((static_cast<size_t>(i) * d1 + j) * d2 + k) * d3 + m];
    }
};

}  // namespace cascade
