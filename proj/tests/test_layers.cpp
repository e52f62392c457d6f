#include <doctest.h>

#include <cmath>

#include "grnet/gradcheck.hpp"
#include "grnet/layers.hpp"
#include "test_util.hpp"

using namespace grnet;
using test::central_diff;
using test::gaussian_matrix;
using test::random_orthonormal;
using test::rel_err;

TEST_CASE("frmap_fwd with identity and scaled-slice weights") {
    Rng rng(1);
    Matrix x = random_orthonormal(4, 2, rng);

    FRMapCache cache;
    Channels out = frmap_fwd({x}, {FRWeight(Matrix::identity(4))}, cache);
    CHECK(max_abs(out[0] - x) == 0.0);

    Matrix slice(3, 4);
    for (int i = 0; i < 3; ++i) slice(i, i) = 2.0;
    out = frmap_fwd({x}, {FRWeight(slice)}, cache);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) CHECK(out[0](i, j) == doctest::Approx(2.0 * x(i, j)));
}

TEST_CASE("frmap_fwd fans out m filters per input channel") {
    Rng rng(2);
    Matrix x = random_orthonormal(6, 2, rng);
    std::vector<FRWeight> weights;
    for (int j = 0; j < 16; ++j) weights.push_back(FRWeight(gaussian_matrix(4, 6, rng)));
    FRMapCache cache;
    Channels out = frmap_fwd({x}, weights, cache);
    CHECK(out.size() == 16);
    CHECK(out[0].rows() == 4);
    CHECK(out[0].cols() == 2);
}

TEST_CASE("frmap_bwd trivial cases") {
    Rng rng(3);
    Matrix x = random_orthonormal(4, 2, rng);
    FRMapCache cache;
    frmap_fwd({x}, {FRWeight(Matrix::identity(4))}, cache);

    FRMapGrads zero = frmap_bwd(cache, {Matrix(4, 2)});
    CHECK(max_abs(zero.input[0]) == 0.0);
    CHECK(max_abs(zero.weight[0]) == 0.0);

    Matrix g = gaussian_matrix(4, 2, rng);
    FRMapGrads grads = frmap_bwd(cache, {g});
    CHECK(max_abs(grads.input[0] - g) < 1e-15);
}

TEST_CASE("frmap backward matches finite differences") {
    LayerDims dims;
    dims.dim = 8;
    dims.order = 3;
    dims.d_out = 5;
    CheckReport r = check_layer("frmap", dims, 4, 1e-6, 1e-6);
    CHECK(r.pass);
}

TEST_CASE("reorth_fwd restores orthonormality") {
    Rng rng(4);
    Matrix x = random_orthonormal(5, 2, rng);
    ReOrthCache cache;
    Channels out = reorth_fwd({x}, cache);
    CHECK(max_abs(out[0] - x) < 1e-14);
    CHECK(max_abs(cache.factors[0].r - Matrix::identity(2)) < 1e-14);

    Matrix scaled = x;
    for (int i = 0; i < 5; ++i) {
        scaled(i, 0) *= 2.0;
        scaled(i, 1) *= 3.0;
    }
    out = reorth_fwd({scaled}, cache);
    CHECK(max_abs(out[0] - x) < 1e-14);

    Matrix raw = gaussian_matrix(7, 3, rng);
    out = reorth_fwd({raw}, cache);
    CHECK(frob_norm(mul_at(out[0], out[0]) - Matrix::identity(3)) < 1e-12);
}

TEST_CASE("reorth_bwd zero upstream gives zero gradient") {
    Rng rng(5);
    ReOrthCache cache;
    reorth_fwd({gaussian_matrix(6, 3, rng)}, cache);
    Channels grads = reorth_bwd(cache, {Matrix(6, 3)});
    CHECK(max_abs(grads[0]) == 0.0);
}

TEST_CASE("reorth backward matches finite differences over five seeds") {
    LayerDims dims;
    dims.dim = 9;
    dims.order = 3;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CheckReport r = check_layer("reorth", dims, seed, 1e-6, 1e-5);
        CHECK_MESSAGE(r.pass, format_report(r));
    }
}

TEST_CASE("reorth backward on the square orthonormal case (Q = X, R = I)") {
    Rng rng(6);
    Matrix x = random_orthonormal(4, 4, rng);
    Matrix c = gaussian_matrix(4, 4, rng);

    ReOrthCache cache;
    reorth_fwd({x}, cache);
    Channels grads = reorth_bwd(cache, {c});

    auto f = [&](const Matrix& v) {
        ReOrthCache tmp;
        return frob_inner(c, reorth_fwd({v}, tmp)[0]);
    };
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double numeric = central_diff(f, x, i, j, 1e-6);
            double analytic = grads[0](i, j);
            // The last column's gradient is structurally zero (it only moves
            // R), where central differences return bare round-off noise.
            bool ok = rel_err(analytic, numeric) < 1e-5 || std::fabs(analytic - numeric) < 1e-8;
            CHECK(ok);
        }
    }
}

TEST_CASE("reorth dR pathway matches finite differences of a loss on R") {
    Rng rng(7);
    Matrix x = gaussian_matrix(6, 3, rng);
    Matrix c = gaussian_matrix(3, 3, rng);

    ReOrthCache cache;
    reorth_fwd({x}, cache);
    std::vector<Matrix> d_r{c};
    Channels grads = reorth_bwd(cache, {Matrix(6, 3)}, &d_r);

    auto f = [&](const Matrix& v) {
        ReOrthCache tmp;
        reorth_fwd({v}, tmp);
        return frob_inner(c, tmp.factors[0].r);
    };
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) {
            double numeric = central_diff(f, x, i, j, 1e-6);
            CHECK(rel_err(grads[0](i, j), numeric) < 1e-5);
        }
    }
}

TEST_CASE("reorth gradient check degrades or errors on near-rank-deficient input") {
    // Columns scaled to produce a condition number around 1e10; outside the
    // full-rank regime the check is expected to fail or to throw.
    Rng rng(8);
    Matrix x = random_orthonormal(7, 3, rng);
    for (int i = 0; i < 7; ++i) x(i, 2) *= 1e-10;
    Matrix c = gaussian_matrix(7, 3, rng);

    bool misbehaved = false;
    try {
        ReOrthCache cache;
        reorth_fwd({x}, cache);
        Channels grads = reorth_bwd(cache, {c});
        auto f = [&](const Matrix& v) {
            ReOrthCache tmp;
            return frob_inner(c, reorth_fwd({v}, tmp)[0]);
        };
        double worst = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 3; ++j)
                worst = std::max(worst, rel_err(grads[0](i, j), central_diff(f, x, i, j, 1e-6)));
        misbehaved = worst > 1e-5;
    } catch (const Error&) {
        misbehaved = true;
    }
    CHECK(misbehaved);
}

TEST_CASE("projmap_fwd produces idempotent symmetric projectors") {
    ProjMapCache cache;
    Matrix e1(2, 1, {1, 0});
    Channels out = projmap_fwd({e1}, cache);
    CHECK(out[0](0, 0) == 1.0);
    CHECK(out[0](0, 1) == 0.0);
    CHECK(out[0](1, 0) == 0.0);
    CHECK(out[0](1, 1) == 0.0);

    Rng rng(9);
    Matrix x = random_orthonormal(6, 2, rng);
    out = projmap_fwd({x}, cache);
    const Matrix& p = out[0];
    double trace = 0.0;
    for (int i = 0; i < 6; ++i) trace += p(i, i);
    CHECK(trace == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(frob_norm(p * p - p) < 1e-10);
    CHECK(max_abs(p - transpose(p)) < 1e-14);
}

TEST_CASE("projmap distance agrees with the projection metric") {
    Rng rng(10);
    Matrix x1 = random_orthonormal(7, 3, rng);
    Matrix x2 = random_orthonormal(7, 3, rng);
    ProjMapCache cache;
    Channels p = projmap_fwd({x1, x2}, cache);
    double direct = frob_norm(p[0] - p[1]) / std::sqrt(2.0);
    double metric = projection_metric(OrthonormalBasis(x1), OrthonormalBasis(x2));
    CHECK(std::fabs(direct - metric) < 1e-12);
}

TEST_CASE("projmap_bwd closed forms and finite differences") {
    Rng rng(11);
    Matrix x = random_orthonormal(4, 2, rng);
    ProjMapCache cache;
    projmap_fwd({x}, cache);

    CHECK(max_abs(projmap_bwd(cache, {Matrix(4, 4)})[0]) == 0.0);
    Channels ident = projmap_bwd(cache, {Matrix::identity(4)});
    CHECK(max_abs(ident[0] - 2.0 * x) < 1e-14);

    LayerDims dims;
    dims.dim = 6;
    dims.order = 2;
    CheckReport r = check_layer("projmap", dims, 12, 1e-6, 1e-6);
    CHECK(r.pass);
}

TEST_CASE("projpool_a_fwd averages channel groups") {
    Rng rng(13);
    Matrix basis = random_orthonormal(4, 2, rng);
    Matrix p = mul_bt(basis, basis);

    PoolCache cache;
    Channels same = projpool_a_fwd({p, p, p, p}, 4, cache);
    CHECK(same.size() == 1);
    CHECK(max_abs(same[0] - p) < 1e-15);

    Channels halved = projpool_a_fwd({p, Matrix(4, 4)}, 2, cache);
    CHECK(max_abs(halved[0] - 0.5 * p) < 1e-15);

    CHECK_THROWS_AS(projpool_a_fwd({p, p, p}, 2, cache), BadGrouping);
}

TEST_CASE("projpool_w_fwd patch means") {
    PoolCache cache;
    Matrix ones(4, 4);
    for (double& v : ones.data()) v = 2.5;
    Channels out = projpool_w_fwd({ones}, 4, cache);
    CHECK(out[0].rows() == 2);
    for (double v : out[0].data()) CHECK(v == doctest::Approx(2.5));

    out = projpool_w_fwd({Matrix::identity(4)}, 4, cache);
    CHECK(out[0](0, 0) == doctest::Approx(0.5));
    CHECK(out[0](0, 1) == doctest::Approx(0.0));
    CHECK(out[0](1, 0) == doctest::Approx(0.0));
    CHECK(out[0](1, 1) == doctest::Approx(0.5));

    CHECK_THROWS_AS(projpool_w_fwd({Matrix::identity(4)}, 3, cache), BadPatchSize);
    CHECK_THROWS_AS(projpool_w_fwd({Matrix::identity(6)}, 16, cache), BadPatchSize);
}

TEST_CASE("projpool_w_fwd matches an independent block-mean oracle") {
    Rng rng(14);
    Matrix g = gaussian_matrix(8, 8, rng);
    Matrix sym = 0.5 * (g + transpose(g));
    PoolCache cache;
    Channels out = projpool_w_fwd({sym}, 4, cache);

    CHECK(max_abs(out[0] - transpose(out[0])) == 0.0);
    for (int bi = 0; bi < 4; ++bi) {
        for (int bj = 0; bj < 4; ++bj) {
            double mean = (sym(2 * bi, 2 * bj) + sym(2 * bi, 2 * bj + 1) +
                           sym(2 * bi + 1, 2 * bj) + sym(2 * bi + 1, 2 * bj + 1)) /
                          4.0;
            CHECK(out[0](bi, bj) == doctest::Approx(mean).epsilon(1e-14));
        }
    }
}

TEST_CASE("projpool_bwd distributes the mean adjoint") {
    Rng rng(15);
    Matrix basis = random_orthonormal(4, 2, rng);
    Matrix p = mul_bt(basis, basis);
    PoolCache cache;
    projpool_a_fwd({p, p}, 2, cache);

    CHECK(max_abs(projpool_bwd(cache, {Matrix(4, 4)})[0]) == 0.0);
    Matrix g = gaussian_matrix(4, 4, rng);
    Channels grads = projpool_bwd(cache, {g});
    CHECK(grads.size() == 2);
    CHECK(max_abs(grads[0] - 0.5 * g) < 1e-15);
    CHECK(max_abs(grads[1] - 0.5 * g) < 1e-15);
}

TEST_CASE("pooling backward matches finite differences") {
    CHECK(check_layer("pool_a", LayerDims{}, 16, 1e-6, 1e-6).pass);
    CHECK(check_layer("pool_w", LayerDims{}, 17, 1e-6, 1e-6).pass);
}

TEST_CASE("pooling adjoint conserves mass for both variants") {
    Rng rng(18);
    for (const char* target : {"a", "w"}) {
        Channels x;
        for (int k = 0; k < 4; ++k) {
            Matrix basis = random_orthonormal(8, 3, rng);
            x.push_back(mul_bt(basis, basis));
        }
        PoolCache cache;
        Channels out = (std::string(target) == "a") ? projpool_a_fwd(x, 4, cache)
                                                    : projpool_w_fwd(x, 4, cache);
        Channels upstream;
        double upstream_mass = 0.0;
        for (const Matrix& o : out) {
            upstream.push_back(gaussian_matrix(o.rows(), o.cols(), rng));
            Matrix ones(o.rows(), o.cols());
            for (double& v : ones.data()) v = 1.0;
            upstream_mass += frob_inner(upstream.back(), ones);
        }
        Channels grads = projpool_bwd(cache, upstream);
        double grad_mass = 0.0;
        for (const Matrix& g : grads) {
            Matrix ones(g.rows(), g.cols());
            for (double& v : ones.data()) v = 1.0;
            grad_mass += frob_inner(g, ones);
        }
        CHECK(grad_mass == doctest::Approx(upstream_mass).epsilon(1e-12));
    }
}

TEST_CASE("orthmap_fwd extracts the leading eigenbasis") {
    Matrix a(3, 3);
    a(0, 0) = 3;
    a(1, 1) = 2;
    a(2, 2) = 1;
    OrthMapCache cache;
    Channels out = orthmap_fwd({a}, 2, cache);
    CHECK(std::fabs(out[0](0, 0)) == doctest::Approx(1.0));
    CHECK(std::fabs(out[0](1, 1)) == doctest::Approx(1.0));
    CHECK(std::fabs(out[0](2, 0)) == doctest::Approx(0.0));
    CHECK(std::fabs(out[0](2, 1)) == doctest::Approx(0.0));
}

TEST_CASE("orthmap_fwd round-trips a projection matrix to its subspace") {
    Rng rng(19);
    Matrix x = random_orthonormal(6, 2, rng);
    OrthMapCache cache;
    Channels out = orthmap_fwd({mul_bt(x, x)}, 2, cache);
    CHECK(projection_metric(OrthonormalBasis(out[0]), OrthonormalBasis(x)) < 1e-8);
}

TEST_CASE("orthmap_fwd of a pooled pair matches an explicit eigendecomposition oracle") {
    Rng rng(20);
    Matrix x1 = random_orthonormal(5, 2, rng);
    // Nearby subspace: small perturbation then re-orthonormalization.
    Matrix x2 = thin_qr(x1 + 0.05 * gaussian_matrix(5, 2, rng)).q;
    Matrix mean = 0.5 * (mul_bt(x1, x1) + mul_bt(x2, x2));

    OrthMapCache cache;
    Channels pooled = orthmap_fwd({mean}, 2, cache);

    EigFactors oracle = sym_eig(mean);
    Matrix top(5, 2);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 2; ++j) top(i, j) = oracle.u(i, j);
    CHECK(projection_metric(OrthonormalBasis(pooled[0]), OrthonormalBasis(top)) < 1e-10);
}

TEST_CASE("orthmap_fwd guards a degenerate top-q spectrum") {
    OrthMapCache cache;
    CHECK_THROWS_AS(orthmap_fwd({Matrix::identity(4)}, 2, cache), DegenerateSpectrum);
}

TEST_CASE("orthmap_bwd zero upstream and constant-loss gradient") {
    Rng rng(21);
    Matrix x = random_orthonormal(6, 2, rng);
    Matrix nearby = thin_qr(x + 0.1 * gaussian_matrix(6, 2, rng)).q;
    Matrix a = 0.5 * (mul_bt(x, x) + mul_bt(nearby, nearby));

    OrthMapCache cache;
    Channels basis = orthmap_fwd({a}, 2, cache);
    CHECK(max_abs(orthmap_bwd(cache, {Matrix(6, 2)})[0]) == 0.0);

    // ||U_{1:q} U_{1:q}^T||_F^2 is constantly q, so the gradient through
    // orthmap + projmap must vanish.
    ProjMapCache pm;
    Channels proj = projmap_fwd(basis, pm);
    Channels dproj{2.0 * proj[0]};
    Channels dbasis = projmap_bwd(pm, dproj);
    Channels da = orthmap_bwd(cache, dbasis);
    CHECK(max_abs(da[0]) < 1e-8);
}

TEST_CASE("orthmap backward matches finite differences via the composed loss") {
    CheckReport r = check_layer("orthmap", LayerDims{}, 22, 1e-6, 1e-5);
    CHECK_MESSAGE(r.pass, format_report(r));
}

TEST_CASE("orthmap d_sigma pathway matches finite differences of an eigenvalue loss") {
    Rng rng(23);
    Matrix v = random_orthonormal(5, 5, rng);
    Matrix scaled = v;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) scaled(i, j) *= 2.0 - 0.3 * j;
    Matrix a = 0.5 * (mul_bt(scaled, v) + transpose(mul_bt(scaled, v)));

    std::vector<double> c(5);
    for (double& x : c) x = rng.gaussian();

    OrthMapCache cache;
    orthmap_fwd({a}, 2, cache);
    std::vector<std::vector<double>> d_sigma{c};
    Channels grads = orthmap_bwd(cache, {Matrix(5, 2)}, &d_sigma);

    auto f = [&](const Matrix& m) {
        EigFactors eig = sym_eig(m);
        double s = 0.0;
        for (int i = 0; i < 5; ++i) s += c[static_cast<std::size_t>(i)] * eig.sigma[static_cast<std::size_t>(i)];
        return s;
    };
    for (int i = 0; i < 5; ++i) {
        for (int j = i; j < 5; ++j) {
            double numeric = central_diff(f, a, i, j, 1e-6, true);
            double analytic = grads[0](i, j) + (i != j ? grads[0](j, i) : 0.0);
            CHECK(rel_err(analytic, numeric) < 1e-5);
        }
    }
}

TEST_CASE("fc_softmax_fwd trivial logits") {
    Rng rng(24);
    Matrix basis = random_orthonormal(3, 1, rng);
    Channels x{mul_bt(basis, basis)};

    FCCache cache;
    std::vector<double> probs = fc_softmax_fwd(x, Matrix(3, 9), {0, 0, 0}, cache);
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-14));

    probs = fc_softmax_fwd(x, Matrix(3, 9), {10, 0, 0}, cache);
    CHECK(probs[0] > 0.9999);
    CHECK(probs[0] + probs[1] + probs[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fc_softmax_fwd normalization on random input") {
    Rng rng(25);
    Matrix basis = random_orthonormal(4, 2, rng);
    Channels x{mul_bt(basis, basis)};
    Matrix w = gaussian_matrix(5, 16, rng);
    std::vector<double> b(5);
    for (double& v : b) v = rng.gaussian();

    FCCache cache;
    std::vector<double> probs = fc_softmax_fwd(x, w, b, cache);
    double total = 0.0;
    for (double p : probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        total += p;
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("fc_softmax_bwd trivial cases") {
    FCCache cache;
    cache.input_vec = {1.0, 2.0, 3.0, 4.0};
    cache.channels = 1;
    cache.dim = 2;

    cache.probs = {1.0, 0.0};
    Matrix w(2, 4);
    FCGrads grads = fc_softmax_bwd(cache, 0, w);
    CHECK(max_abs(grads.w_fc) == 0.0);
    CHECK(grads.bias[0] == 0.0);
    CHECK(grads.bias[1] == 0.0);
    CHECK(max_abs(grads.input[0]) == 0.0);

    cache.probs = {0.5, 0.5};
    grads = fc_softmax_bwd(cache, 0, w);
    CHECK(grads.bias[0] == doctest::Approx(-0.5));
    CHECK(grads.bias[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(fc_softmax_bwd(cache, 2, w), BadLabel);
}

TEST_CASE("fc_softmax backward matches finite differences") {
    CheckReport r = check_layer("fcsoftmax", LayerDims{}, 26, 1e-6, 1e-6);
    CHECK_MESSAGE(r.pass, format_report(r));
}

TEST_CASE("layer backward passes are linear in the upstream gradient") {
    Rng rng(27);
    Matrix x = gaussian_matrix(6, 3, rng);
    Matrix g = gaussian_matrix(6, 3, rng);
    ReOrthCache cache;
    reorth_fwd({x}, cache);
    Channels one = reorth_bwd(cache, {g});
    Channels two = reorth_bwd(cache, {2.0 * g});
    CHECK(max_abs(two[0] - 2.0 * one[0]) < 1e-12);

    ProjMapCache pm;
    projmap_fwd({random_orthonormal(5, 2, rng)}, pm);
    Matrix gp = gaussian_matrix(5, 5, rng);
    CHECK(max_abs(projmap_bwd(pm, {2.0 * gp})[0] - 2.0 * projmap_bwd(pm, {gp})[0]) < 1e-12);
}

TEST_CASE("frmap then reorth only depends on the column span") {
    Rng rng(28);
    Matrix x = random_orthonormal(6, 3, rng);
    Matrix rot = random_orthonormal(3, 3, rng);
    FRWeight w(gaussian_matrix(6, 6, rng));

    FRMapCache fr;
    ReOrthCache ro;
    ProjMapCache pm;
    Channels p1 = projmap_fwd(reorth_fwd(frmap_fwd({x}, {w}, fr), ro), pm);
    Channels p2 = projmap_fwd(reorth_fwd(frmap_fwd({x * rot}, {w}, fr), ro), pm);
    CHECK(max_abs(p1[0] - p2[0]) < 1e-10);
}

TEST_CASE("backward with a mismatched cache is an error") {
    Rng rng(29);
    ReOrthCache cache;
    reorth_fwd({gaussian_matrix(6, 3, rng)}, cache);
    CHECK_THROWS_AS(reorth_bwd(cache, {Matrix(6, 3), Matrix(6, 3)}), CacheMismatch);
    CHECK_THROWS_AS(reorth_bwd(cache, {Matrix(5, 3)}), CacheMismatch);
}
