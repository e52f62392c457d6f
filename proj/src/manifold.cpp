#include "grnet/manifold.hpp"

#include <algorithm>
#include <cmath>

#include "grnet/rng.hpp"

namespace grnet {

OrthonormalBasis::OrthonormalBasis(Matrix basis) : basis_(std::move(basis)) {
    if (basis_.rows() < basis_.cols()) {
        throw ShapeMismatch("OrthonormalBasis: need dim >= order");
    }
    Matrix gram = mul_at(basis_, basis_);
    double dev = frob_norm(gram - Matrix::identity(basis_.cols()));
    if (dev >= 1e-10) {
        throw InvariantViolation("OrthonormalBasis: columns are not orthonormal (||X^T X - I||_F = " +
                                 std::to_string(dev) + ")");
    }
}

FRWeight::FRWeight(Matrix w) : w_(std::move(w)) {
    if (w_.rows() > w_.cols()) {
        throw ShapeMismatch("FRWeight: need d_out <= d_in");
    }
    double ratio = qr_diag_ratio(transpose(w_));
    if (ratio <= 1e-12) {
        throw RankDeficient("FRWeight: weight is not row full rank (diag ratio " +
                                std::to_string(ratio) + ")",
                            ratio);
    }
}

double projection_metric(const OrthonormalBasis& x1, const OrthonormalBasis& x2) {
    if (x1.dim() != x2.dim() || x1.order() != x2.order()) {
        throw ShapeMismatch("projection_metric: bases must share (D, q)");
    }
    Matrix p1 = mul_bt(x1.basis(), x1.basis());
    Matrix p2 = mul_bt(x2.basis(), x2.basis());
    return frob_norm(p1 - p2) / std::sqrt(2.0);
}

std::vector<double> principal_angles(const OrthonormalBasis& x1, const OrthonormalBasis& x2) {
    if (x1.dim() != x2.dim() || x1.order() != x2.order()) {
        throw ShapeMismatch("principal_angles: bases must share (D, q)");
    }
    Matrix m = mul_at(x1.basis(), x2.basis());
    EigFactors eig = sym_eig(mul_bt(m, m));
    std::vector<double> angles;
    angles.reserve(eig.sigma.size());
    // sigma is sorted non-increasing, so cosines descend and angles ascend.
    for (double lambda : eig.sigma) {
        double cosine = std::sqrt(std::clamp(lambda, 0.0, 1.0));
        angles.push_back(std::acos(cosine));
    }
    return angles;
}

Matrix riemannian_grad(const FRWeight& w, const Matrix& egrad) {
    if (egrad.rows() != w.d_out() || egrad.cols() != w.d_in()) {
        throw ShapeMismatch("riemannian_grad: gradient shape does not match weight");
    }
    return egrad - (egrad * transpose(w.w())) * w.w();
}

FRWeight retract(const Matrix& w_new_raw, RetractionMode mode,
                 std::uint64_t jitter_seed, int* jitter_rounds) {
    if (w_new_raw.rows() > w_new_raw.cols()) {
        throw ShapeMismatch("retract: need d_out <= d_in");
    }
    if (jitter_rounds) *jitter_rounds = 0;

    if (mode == RetractionMode::StiefelQr) {
        QRFactors qr = thin_qr(transpose(w_new_raw));
        return FRWeight(transpose(qr.q));
    }

    // PsdIdentity: any full-rank representative is a valid point, so the
    // retraction reduces to a rank guard with jittered retries.
    Matrix w = w_new_raw;
    Rng rng(jitter_seed);
    for (int round = 0; round <= 3; ++round) {
        double ratio = qr_diag_ratio(transpose(w));
        if (ratio > 1e-12) {
            if (jitter_rounds) *jitter_rounds = round;
            return FRWeight(std::move(w));
        }
        if (round == 3) break;
        double scale = 1e-8 * frob_norm(w_new_raw);
        if (scale == 0.0) scale = 1e-8;
        for (double& v : w.data()) v += scale * rng.gaussian();
    }
    throw RankDeficient("retract: rank guard failed after 3 jitter rounds", 0.0);
}

}  // namespace grnet
