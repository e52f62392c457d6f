#pragma once

#include <cstdint>
#include <vector>

#include "grnet/linalg.hpp"

namespace grnet {

// Representative of a point on the Grassmannian Gr(q, D): a D x q matrix
// with orthonormal columns.
class OrthonormalBasis {
public:
    explicit OrthonormalBasis(Matrix basis);

    int dim() const { return basis_.rows(); }
    int order() const { return basis_.cols(); }
    const Matrix& basis() const { return basis_; }

private:
    Matrix basis_;
};

// One FRMap filter: a row-full-rank d_out x d_in matrix. Network configs
// additionally require d_out < d_in; square weights are legal here so tests
// can use identity filters.
class FRWeight {
public:
    explicit FRWeight(Matrix w);

    int d_out() const { return w_.rows(); }
    int d_in() const { return w_.cols(); }
    const Matrix& w() const { return w_; }

private:
    Matrix w_;
};

enum class RetractionMode {
    PsdIdentity,  // full-rank representative is already a valid point; rank guard only
    StiefelQr,    // re-orthonormalize rows via thin QR of the transpose
};

// 2^{-1/2} * ||x1 x1^T - x2 x2^T||_F.
double projection_metric(const OrthonormalBasis& x1, const OrthonormalBasis& x2);

// Canonical angles between the two subspaces, ascending in [0, pi/2].
// Computed from the eigenvalues of (x1^T x2)(x1^T x2)^T.
std::vector<double> principal_angles(const OrthonormalBasis& x1, const OrthonormalBasis& x2);

// Projects the Euclidean gradient onto the weight manifold:
// egrad - egrad * w^T * w.
Matrix riemannian_grad(const FRWeight& w, const Matrix& egrad);

// Maps a raw updated weight back onto the manifold. PsdIdentity keeps the
// matrix and only enforces the rank guard (seeded jitter of scale
// 1e-8 * ||w||_F on failure, at most 3 rounds); StiefelQr returns the
// transposed Q factor of thin_qr(w^T). jitter_rounds, when given, receives
// the number of jitter rounds that were needed.
FRWeight retract(const Matrix& w_new_raw, RetractionMode mode,
                 std::uint64_t jitter_seed = 0, int* jitter_rounds = nullptr);

}  // namespace grnet
