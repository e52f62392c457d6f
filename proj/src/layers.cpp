#include "grnet/layers.hpp"

#include <algorithm>
#include <cmath>

namespace grnet {

namespace {

// Solves x * r^T = b for x, with r upper triangular: row i satisfies
// b(i, j) = sum_{k >= j} x(i, k) r(j, k), so back-substitute from the last
// column.
Matrix solve_right_rt(const Matrix& b, const Matrix& r) {
    int n = r.rows();
    Matrix x(b.rows(), n);
    for (int i = 0; i < b.rows(); ++i) {
        for (int j = n - 1; j >= 0; --j) {
            double s = b(i, j);
            for (int k = j + 1; k < n; ++k) s -= x(i, k) * r(j, k);
            x(i, j) = s / r(j, j);
        }
    }
    return x;
}

Matrix symmetrize(const Matrix& a) {
    return 0.5 * (a + transpose(a));
}

void check_channel_count(std::size_t got, std::size_t want, const char* who) {
    if (got != want) {
        throw CacheMismatch(std::string(who) + ": upstream channel count does not match cache");
    }
}

}  // namespace

Channels frmap_fwd(const Channels& x, const std::vector<FRWeight>& weights, FRMapCache& cache) {
    if (weights.empty()) throw ShapeMismatch("frmap_fwd: need at least one weight");
    cache.inputs = x;
    cache.weights.clear();
    cache.weights.reserve(weights.size());
    for (const FRWeight& w : weights) cache.weights.push_back(w.w());

    Channels out;
    out.reserve(x.size() * weights.size());
    for (const Matrix& ch : x) {
        for (const FRWeight& w : weights) {
            if (w.d_in() != ch.rows()) {
                throw ShapeMismatch("frmap_fwd: weight d_in does not match channel dimension");
            }
            out.push_back(w.w() * ch);
        }
    }
    return out;
}

FRMapGrads frmap_bwd(const FRMapCache& cache, const Channels& upstream) {
    std::size_t m = cache.weights.size();
    check_channel_count(upstream.size(), cache.inputs.size() * m, "frmap_bwd");

    FRMapGrads grads;
    grads.input.reserve(cache.inputs.size());
    for (const Matrix& ch : cache.inputs) grads.input.emplace_back(ch.rows(), ch.cols());
    for (const Matrix& w : cache.weights) grads.weight.emplace_back(w.rows(), w.cols());

    for (std::size_t i = 0; i < cache.inputs.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const Matrix& g = upstream[i * m + j];
            if (g.rows() != cache.weights[j].rows() || g.cols() != cache.inputs[i].cols()) {
                throw CacheMismatch("frmap_bwd: upstream shape does not match cache");
            }
            grads.weight[j] = grads.weight[j] + mul_bt(g, cache.inputs[i]);
            grads.input[i] = grads.input[i] + mul_at(cache.weights[j], g);
        }
    }
    return grads;
}

Channels reorth_fwd(const Channels& x, ReOrthCache& cache) {
    cache.factors.clear();
    cache.factors.reserve(x.size());
    Channels out;
    out.reserve(x.size());
    for (const Matrix& ch : x) {
        QRFactors qr = thin_qr(ch);
        out.push_back(qr.q);
        cache.factors.push_back(std::move(qr));
    }
    return out;
}

Channels reorth_bwd(const ReOrthCache& cache, const Channels& d_q,
                    const std::vector<Matrix>* d_r) {
    check_channel_count(d_q.size(), cache.factors.size(), "reorth_bwd");
    if (d_r) check_channel_count(d_r->size(), cache.factors.size(), "reorth_bwd (d_r)");

    Channels out;
    out.reserve(d_q.size());
    for (std::size_t c = 0; c < d_q.size(); ++c) {
        const Matrix& q = cache.factors[c].q;
        const Matrix& r = cache.factors[c].r;
        const Matrix& g = d_q[c];
        if (!g.same_shape(q)) throw CacheMismatch("reorth_bwd: upstream shape does not match Q");
        for (int i = 0; i < r.rows(); ++i) {
            if (std::fabs(r(i, i)) < 1e-14) {
                throw SingularR("reorth_bwd: R diagonal entry below 1e-14, cannot invert");
            }
        }

        // (S dL/dQ + Q bsym(Q^T dL/dQ)) R^{-T}, with S dL/dQ expanded as
        // dL/dQ - Q (Q^T dL/dQ) to avoid forming the D x D projector.
        Matrix qtg = mul_at(q, g);
        Matrix grad = solve_right_rt(g - q * qtg + q * bsym(qtg), r);

        if (d_r) {
            const Matrix& gr = (*d_r)[c];
            if (!gr.same_shape(r)) throw CacheMismatch("reorth_bwd: d_r shape does not match R");
            grad = grad + q * (gr - solve_right_rt(bsym(mul_bt(gr, r)), r));
        }
        out.push_back(std::move(grad));
    }
    return out;
}

Channels projmap_fwd(const Channels& x, ProjMapCache& cache) {
    cache.inputs = x;
    Channels out;
    out.reserve(x.size());
    for (const Matrix& ch : x) out.push_back(mul_bt(ch, ch));
    return out;
}

Channels projmap_bwd(const ProjMapCache& cache, const Channels& upstream) {
    check_channel_count(upstream.size(), cache.inputs.size(), "projmap_bwd");
    Channels out;
    out.reserve(upstream.size());
    for (std::size_t c = 0; c < upstream.size(); ++c) {
        const Matrix& x = cache.inputs[c];
        const Matrix& g = upstream[c];
        if (g.rows() != x.rows() || g.cols() != x.rows()) {
            throw CacheMismatch("projmap_bwd: upstream shape does not match cache");
        }
        out.push_back((g + transpose(g)) * x);
    }
    return out;
}

Channels projpool_a_fwd(const Channels& p, int n, PoolCache& cache) {
    if (n < 1 || p.empty() || p.size() % static_cast<std::size_t>(n) != 0) {
        throw BadGrouping("projpool_a_fwd: channel count must be a positive multiple of n");
    }
    for (const Matrix& ch : p) {
        if (!ch.same_shape(p.front())) {
            throw BadGrouping("projpool_a_fwd: channels must share one shape");
        }
    }
    cache.variant = PoolVariant::Across;
    cache.group = n;
    cache.in_channels = static_cast<int>(p.size());
    cache.in_dim = p.front().rows();

    Channels out;
    out.reserve(p.size() / static_cast<std::size_t>(n));
    for (std::size_t g = 0; g < p.size(); g += static_cast<std::size_t>(n)) {
        Matrix mean = p[g];
        for (int k = 1; k < n; ++k) mean = mean + p[g + static_cast<std::size_t>(k)];
        out.push_back((1.0 / n) * mean);
    }
    return out;
}

Channels projpool_w_fwd(const Channels& p, int n, PoolCache& cache) {
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (n < 1 || side * side != n) {
        throw BadPatchSize("projpool_w_fwd: n must be a perfect square");
    }
    if (p.empty()) throw BadPatchSize("projpool_w_fwd: need at least one channel");
    int dim = p.front().rows();
    if (dim % side != 0) {
        throw BadPatchSize("projpool_w_fwd: channel dimension must be divisible by sqrt(n)");
    }
    for (const Matrix& ch : p) {
        if (ch.rows() != dim || ch.cols() != dim) {
            throw BadPatchSize("projpool_w_fwd: channels must be square and share one shape");
        }
    }
    cache.variant = PoolVariant::Within;
    cache.group = n;
    cache.in_channels = static_cast<int>(p.size());
    cache.in_dim = dim;

    int out_dim = dim / side;
    Channels out;
    out.reserve(p.size());
    for (const Matrix& ch : p) {
        Matrix pooled(out_dim, out_dim);
        for (int bi = 0; bi < out_dim; ++bi) {
            for (int bj = 0; bj < out_dim; ++bj) {
                double s = 0.0;
                for (int a = 0; a < side; ++a)
                    for (int b = 0; b < side; ++b) s += ch(bi * side + a, bj * side + b);
                pooled(bi, bj) = s / n;
            }
        }
        out.push_back(symmetrize(pooled));
    }
    return out;
}

Channels projpool_bwd(const PoolCache& cache, const Channels& upstream) {
    Channels out;
    if (cache.variant == PoolVariant::Across) {
        check_channel_count(upstream.size(),
                            static_cast<std::size_t>(cache.in_channels / cache.group),
                            "projpool_bwd");
        out.reserve(static_cast<std::size_t>(cache.in_channels));
        for (const Matrix& g : upstream) {
            if (g.rows() != cache.in_dim || g.cols() != cache.in_dim) {
                throw CacheMismatch("projpool_bwd: upstream shape does not match cache");
            }
            Matrix share = (1.0 / cache.group) * g;
            for (int k = 0; k < cache.group; ++k) out.push_back(share);
        }
        return out;
    }

    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cache.group))));
    int out_dim = cache.in_dim / side;
    check_channel_count(upstream.size(), static_cast<std::size_t>(cache.in_channels),
                        "projpool_bwd");
    out.reserve(upstream.size());
    for (const Matrix& g : upstream) {
        if (g.rows() != out_dim || g.cols() != out_dim) {
            throw CacheMismatch("projpool_bwd: upstream shape does not match cache");
        }
        // Adjoint of symmetrize then of the patch mean.
        Matrix gs = symmetrize(g);
        Matrix grad(cache.in_dim, cache.in_dim);
        for (int i = 0; i < cache.in_dim; ++i)
            for (int j = 0; j < cache.in_dim; ++j)
                grad(i, j) = gs(i / side, j / side) / cache.group;
        out.push_back(std::move(grad));
    }
    return out;
}

Channels orthmap_fwd(const Channels& p, int q, OrthMapCache& cache) {
    if (q < 1) throw ShapeMismatch("orthmap_fwd: order must be >= 1");
    cache.factors.clear();
    cache.factors.reserve(p.size());
    cache.order = q;

    Channels out;
    out.reserve(p.size());
    for (const Matrix& ch : p) {
        if (ch.rows() != ch.cols()) throw NotSquare("orthmap_fwd: channels must be square");
        if (q > ch.rows()) throw ShapeMismatch("orthmap_fwd: order exceeds channel dimension");
        EigFactors eig = sym_eig(ch);
        if (q < ch.rows()) {
            double gap = eig.sigma[static_cast<std::size_t>(q - 1)] -
                         eig.sigma[static_cast<std::size_t>(q)];
            if (gap <= 1e-10) {
                throw DegenerateSpectrum(
                    "orthmap_fwd: eigenvalue gap sigma_q - sigma_{q+1} = " +
                    std::to_string(gap) + " leaves the top-q subspace ill-defined");
            }
        }
        Matrix basis(ch.rows(), q);
        for (int i = 0; i < ch.rows(); ++i)
            for (int j = 0; j < q; ++j) basis(i, j) = eig.u(i, j);
        out.push_back(std::move(basis));
        cache.factors.push_back(std::move(eig));
    }
    return out;
}

Channels orthmap_bwd(const OrthMapCache& cache, const Channels& d_u,
                     const std::vector<std::vector<double>>* d_sigma) {
    check_channel_count(d_u.size(), cache.factors.size(), "orthmap_bwd");
    if (d_sigma) check_channel_count(d_sigma->size(), cache.factors.size(), "orthmap_bwd (d_sigma)");

    Channels out;
    out.reserve(d_u.size());
    for (std::size_t c = 0; c < d_u.size(); ++c) {
        const Matrix& u = cache.factors[c].u;
        const std::vector<double>& sigma = cache.factors[c].sigma;
        int dim = u.rows();
        const Matrix& g = d_u[c];
        if (g.rows() != dim || g.cols() != cache.order) {
            throw CacheMismatch("orthmap_bwd: upstream shape does not match cache");
        }

        // dL/dU = [g 0], padded to D x D.
        Matrix gu(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < cache.order; ++j) gu(i, j) = g(i, j);

        Matrix m = mul_at(u, gu);
        // K^T hadamard: entry (i, j) scales by 1/(sigma_j - sigma_i),
        // denominators clamped at 1e-10 in magnitude keeping their sign.
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                if (i == j) {
                    m(i, j) = 0.0;
                    continue;
                }
                double d = sigma[static_cast<std::size_t>(j)] - sigma[static_cast<std::size_t>(i)];
                if (std::fabs(d) < 1e-10) d = (d >= 0.0 ? 1e-10 : -1e-10);
                m(i, j) /= d;
            }
        }
        Matrix grad = u * m;
        if (d_sigma) {
            const std::vector<double>& ds = (*d_sigma)[c];
            if (ds.size() != static_cast<std::size_t>(dim)) {
                throw CacheMismatch("orthmap_bwd: d_sigma length does not match dimension");
            }
            Matrix scaled = u;  // u * diag(ds)
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) scaled(i, j) *= ds[static_cast<std::size_t>(j)];
            grad = grad * transpose(u) + scaled * transpose(u);
        } else {
            grad = mul_bt(grad, u);
        }
        // The layer's domain is symmetric matrices.
        out.push_back(symmetrize(grad));
    }
    return out;
}

std::vector<double> fc_softmax_fwd(const Channels& p, const Matrix& w_fc,
                                   const std::vector<double>& bias, FCCache& cache) {
    if (p.empty()) throw ShapeMismatch("fc_softmax_fwd: need at least one channel");
    int dim = p.front().rows();
    for (const Matrix& ch : p) {
        if (ch.rows() != dim || ch.cols() != dim) {
            throw ShapeMismatch("fc_softmax_fwd: channels must be square and share one shape");
        }
    }
    std::size_t vec_len = p.size() * static_cast<std::size_t>(dim) * dim;
    if (static_cast<std::size_t>(w_fc.cols()) != vec_len) {
        throw ShapeMismatch("fc_softmax_fwd: w_fc columns do not match vectorized input");
    }
    int classes = w_fc.rows();
    if (bias.size() != static_cast<std::size_t>(classes)) {
        throw ShapeMismatch("fc_softmax_fwd: bias length does not match class count");
    }

    std::vector<double> vec;
    vec.reserve(vec_len);
    for (const Matrix& ch : p) vec.insert(vec.end(), ch.data().begin(), ch.data().end());

    std::vector<double> logits(static_cast<std::size_t>(classes), 0.0);
    for (int c = 0; c < classes; ++c) {
        double s = bias[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < vec_len; ++k) s += w_fc(c, static_cast<int>(k)) * vec[k];
        logits[static_cast<std::size_t>(c)] = s;
    }

    double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    std::vector<double> probs(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        probs[c] = std::exp(logits[c] - peak);
        total += probs[c];
    }
    for (double& v : probs) v /= total;

    cache.input_vec = std::move(vec);
    cache.probs = probs;
    cache.channels = static_cast<int>(p.size());
    cache.dim = dim;
    return probs;
}

FCGrads fc_softmax_bwd(const FCCache& cache, int label, const Matrix& w_fc,
                       double loss_scale) {
    int classes = static_cast<int>(cache.probs.size());
    if (label < 0 || label >= classes) {
        throw BadLabel("fc_softmax_bwd: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    if (w_fc.rows() != classes ||
        static_cast<std::size_t>(w_fc.cols()) != cache.input_vec.size()) {
        throw CacheMismatch("fc_softmax_bwd: w_fc shape does not match cache");
    }

    std::vector<double> dlogits = cache.probs;
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    for (double& v : dlogits) v *= loss_scale;

    FCGrads grads;
    grads.w_fc = Matrix(classes, static_cast<int>(cache.input_vec.size()));
    for (int c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < cache.input_vec.size(); ++k)
            grads.w_fc(c, static_cast<int>(k)) = dlogits[static_cast<std::size_t>(c)] * cache.input_vec[k];
    grads.bias = dlogits;

    std::vector<double> dvec(cache.input_vec.size(), 0.0);
    for (int c = 0; c < classes; ++c) {
        double dc = dlogits[static_cast<std::size_t>(c)];
        if (dc == 0.0) continue;
        for (std::size_t k = 0; k < dvec.size(); ++k) dvec[k] += dc * w_fc(c, static_cast<int>(k));
    }

    grads.input.reserve(static_cast<std::size_t>(cache.channels));
    std::size_t off = 0;
    for (int ch = 0; ch < cache.channels; ++ch) {
        Matrix g(cache.dim, cache.dim);
        for (int i = 0; i < cache.dim; ++i)
            for (int j = 0; j < cache.dim; ++j) g(i, j) = dvec[off++];
        grads.input.push_back(std::move(g));
    }
    return grads;
}

}  // namespace grnet
