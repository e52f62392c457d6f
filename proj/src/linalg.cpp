#include "grnet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grnet {

namespace {

void require(bool cond, const char* what) {
    if (!cond) throw ShapeMismatch(what);
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 1 || cols < 1) throw ShapeMismatch("matrix dimensions must be >= 1");
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 1 || cols < 1) throw ShapeMismatch("matrix dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw ShapeMismatch("matrix data length does not match rows * cols");
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw ShapeMismatch("matrix entries must be finite");
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "operator+: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "operator-: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "operator*: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix mul_bt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "mul_bt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

Matrix mul_at(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "mul_at: inner dimensions differ");
    Matrix c(a.cols(), b.cols());
    for (int k = 0; k < a.rows(); ++k) {
        for (int i = 0; i < a.cols(); ++i) {
            double aki = a(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
        }
    }
    return c;
}

double frob_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

bool all_finite(const Matrix& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

double frob_inner(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "frob_inner: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

Matrix tril_strict(const Matrix& a) {
    if (a.rows() != a.cols()) throw NotSquare("tril_strict: matrix must be square");
    Matrix t(a.rows(), a.cols());
    for (int i = 1; i < a.rows(); ++i)
        for (int j = 0; j < i; ++j) t(i, j) = a(i, j);
    return t;
}

Matrix asym(const Matrix& a) {
    if (a.rows() != a.cols()) throw NotSquare("asym: matrix must be square");
    Matrix t = tril_strict(a);
    return t - transpose(t);
}

Matrix bsym(const Matrix& a) {
    if (a.rows() != a.cols()) throw NotSquare("bsym: matrix must be square");
    return tril_strict(a) - tril_strict(transpose(a));
}

namespace {

// Householder vectors for the thin factorization; a is reduced in place so
// its upper q x q triangle holds R on exit. See Trefethen & Bau, Alg. 10.1.
std::vector<std::vector<double>> householder_reduce(Matrix& a) {
    int rows = a.rows();
    int cols = a.cols();
    std::vector<std::vector<double>> vs;
    vs.reserve(static_cast<std::size_t>(cols));
    for (int k = 0; k < cols; ++k) {
        double norm_x = 0.0;
        for (int i = k; i < rows; ++i) norm_x += a(i, k) * a(i, k);
        norm_x = std::sqrt(norm_x);

        std::vector<double> v(static_cast<std::size_t>(rows), 0.0);
        if (norm_x > 0.0) {
            double alpha = (a(k, k) >= 0.0) ? -norm_x : norm_x;
            for (int i = k; i < rows; ++i) v[static_cast<std::size_t>(i)] = a(i, k);
            v[static_cast<std::size_t>(k)] -= alpha;
            double vnorm2 = 0.0;
            for (int i = k; i < rows; ++i) vnorm2 += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
            if (vnorm2 > 0.0) {
                double beta = 2.0 / vnorm2;
                for (int j = k; j < cols; ++j) {
                    double dot = 0.0;
                    for (int i = k; i < rows; ++i) dot += v[static_cast<std::size_t>(i)] * a(i, j);
                    dot *= beta;
                    for (int i = k; i < rows; ++i) a(i, j) -= dot * v[static_cast<std::size_t>(i)];
                }
            }
            a(k, k) = alpha;
            for (int i = k + 1; i < rows; ++i) a(i, k) = 0.0;
        }
        vs.push_back(std::move(v));
    }
    return vs;
}

}  // namespace

double qr_diag_ratio(const Matrix& x) {
    if (x.rows() < x.cols()) throw ShapeMismatch("qr_diag_ratio: need rows >= cols");
    Matrix a = x;
    householder_reduce(a);
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < a.cols(); ++i) {
        double d = std::fabs(a(i, i));
        if (i == 0) lo = hi = d;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return hi > 0.0 ? lo / hi : 0.0;
}

QRFactors thin_qr(const Matrix& x) {
    if (x.rows() < x.cols()) throw ShapeMismatch("thin_qr: need rows >= cols");
    int rows = x.rows();
    int cols = x.cols();

    Matrix a = x;
    auto vs = householder_reduce(a);

    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < cols; ++i) {
        double d = std::fabs(a(i, i));
        if (i == 0) lo = hi = d;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    double ratio = hi > 0.0 ? lo / hi : 0.0;
    if (hi == 0.0 || ratio <= 1e-12) {
        throw RankDeficient("thin_qr: input is rank deficient (diag ratio " +
                                std::to_string(ratio) + ")",
                            ratio);
    }

    Matrix r(cols, cols);
    for (int i = 0; i < cols; ++i)
        for (int j = i; j < cols; ++j) r(i, j) = a(i, j);

    // Q = H_0 ... H_{q-1} applied to the first q columns of the identity.
    Matrix q(rows, cols);
    for (int j = 0; j < cols; ++j) q(j, j) = 1.0;
    for (int k = cols - 1; k >= 0; --k) {
        const auto& v = vs[static_cast<std::size_t>(k)];
        double vnorm2 = 0.0;
        for (int i = k; i < rows; ++i) vnorm2 += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        if (vnorm2 == 0.0) continue;
        double beta = 2.0 / vnorm2;
        for (int j = 0; j < cols; ++j) {
            double dot = 0.0;
            for (int i = k; i < rows; ++i) dot += v[static_cast<std::size_t>(i)] * q(i, j);
            dot *= beta;
            for (int i = k; i < rows; ++i) q(i, j) -= dot * v[static_cast<std::size_t>(i)];
        }
    }

    // Positive-diagonal convention: flip matching Q column / R row pairs.
    for (int i = 0; i < cols; ++i) {
        if (r(i, i) < 0.0) {
            for (int j = i; j < cols; ++j) r(i, j) = -r(i, j);
            for (int k = 0; k < rows; ++k) q(k, i) = -q(k, i);
        }
    }
    return {std::move(q), std::move(r)};
}

namespace {

double offdiag_norm(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

double diag_norm(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, i) * a(i, i);
    return std::sqrt(s);
}

}  // namespace

EigFactors sym_eig(const Matrix& a_in) {
    if (a_in.rows() != a_in.cols()) throw NotSquare("sym_eig: matrix must be square");
    int n = a_in.rows();

    double asym_dev = frob_norm(a_in - transpose(a_in));
    if (asym_dev > 1e-10 * (1.0 + frob_norm(a_in))) {
        throw NotSymmetric("sym_eig: matrix is not symmetric (deviation " +
                           std::to_string(asym_dev) + ")");
    }

    Matrix a = 0.5 * (a_in + transpose(a_in));
    Matrix u = Matrix::identity(n);

    // Cyclic Jacobi sweeps; see Golub & Van Loan sec. 8.5.
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (offdiag_norm(a) <= 1e-12 * std::max(diag_norm(a), 1e-300)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                        : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;

                double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (int k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(p, k) = a(k, p);
                    a(k, q) = s * akp + c * akq;
                    a(q, k) = a(k, q);
                }
                for (int k = 0; k < n; ++k) {
                    double ukp = u(k, p), ukq = u(k, q);
                    u(k, p) = c * ukp - s * ukq;
                    u(k, q) = s * ukp + c * ukq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) > a(j, j); });

    EigFactors out;
    out.u = Matrix(n, n);
    out.sigma.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        int src = order[static_cast<std::size_t>(j)];
        out.sigma[static_cast<std::size_t>(j)] = a(src, src);
        for (int i = 0; i < n; ++i) out.u(i, j) = u(i, src);
    }
    return out;
}

}  // namespace grnet
