#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "grnet/errors.hpp"

namespace grnet {

// Dense real matrix, row-major, 64-bit values.
class Matrix {
public:
    Matrix() = default;

    // Zero-initialized rows x cols matrix.
    Matrix(int rows, int cols);

    // Takes ownership of row-major data; every entry must be finite.
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);  // matrix product
Matrix operator*(double s, const Matrix& a);

Matrix transpose(const Matrix& a);

// a * b^T without forming the transpose.
Matrix mul_bt(const Matrix& a, const Matrix& b);
// a^T * b without forming the transpose.
Matrix mul_at(const Matrix& a, const Matrix& b);

double frob_norm(const Matrix& a);
double max_abs(const Matrix& a);
bool all_finite(const Matrix& a);

// Frobenius inner product Tr(a^T b); shapes must agree.
double frob_inner(const Matrix& a, const Matrix& b);

// Strictly lower-triangular part of a square matrix.
Matrix tril_strict(const Matrix& a);

// tril_strict(a) - tril_strict(a)^T; antisymmetric by construction.
Matrix asym(const Matrix& a);

// tril_strict(a) - tril_strict(a^T).
Matrix bsym(const Matrix& a);

// Thin QR factors: x = q * r with q (D x q) orthonormal columns and
// r (q x q) upper-triangular with strictly positive diagonal.
struct QRFactors {
    Matrix q;
    Matrix r;
};

// Symmetric eigendecomposition factors: u orthogonal (D x D), sigma sorted
// non-increasing, input = u * diag(sigma) * u^T.
struct EigFactors {
    Matrix u;
    std::vector<double> sigma;
};

// Householder thin QR with the positive-diagonal sign convention, making the
// factors a deterministic function of the input. Throws RankDeficient when
// min|R_ii| <= 1e-12 * max|R_ii| (measured before the sign fix).
QRFactors thin_qr(const Matrix& x);

// min|R_ii| / max|R_ii| of the unfixed Householder R factor; 0 for a zero
// matrix. Never throws on rank deficiency.
double qr_diag_ratio(const Matrix& x);

// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
// symmetrized as (a + a^T)/2 first; asymmetry beyond
// 1e-10 * (1 + ||a||_F) is a NotSymmetric error. Eigenvalues are returned
// in non-increasing order with eigenvectors permuted to match.
EigFactors sym_eig(const Matrix& a);

}  // namespace grnet
