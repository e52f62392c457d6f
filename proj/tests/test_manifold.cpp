#include <doctest.h>

#include <cmath>

#include "grnet/manifold.hpp"
#include "test_util.hpp"

using namespace grnet;
using test::gaussian_matrix;
using test::random_orthonormal;

namespace {

OrthonormalBasis span_of(int dim, int axis) {
    Matrix b(dim, 1);
    b(axis, 0) = 1.0;
    return OrthonormalBasis(std::move(b));
}

}  // namespace

TEST_CASE("projection_metric of identical and orthogonal lines") {
    OrthonormalBasis e1 = span_of(2, 0);
    OrthonormalBasis e2 = span_of(2, 1);
    CHECK(projection_metric(e1, e1) == 0.0);
    CHECK(projection_metric(e1, e2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("projection_metric matches the trace identity on Gr(3,10)") {
    Rng rng(9);
    OrthonormalBasis x1(random_orthonormal(10, 3, rng));
    OrthonormalBasis x2(random_orthonormal(10, 3, rng));
    double d = projection_metric(x1, x2);
    double cross = frob_norm(mul_at(x1.basis(), x2.basis()));
    CHECK(std::fabs(d - std::sqrt(3.0 - cross * cross)) < 1e-10);
}

TEST_CASE("projection_metric is symmetric and basis-rotation invariant") {
    Rng rng(23);
    OrthonormalBasis x1(random_orthonormal(8, 3, rng));
    OrthonormalBasis x2(random_orthonormal(8, 3, rng));
    CHECK(std::fabs(projection_metric(x1, x2) - projection_metric(x2, x1)) < 1e-14);

    Matrix rot = random_orthonormal(3, 3, rng);
    OrthonormalBasis rotated(x1.basis() * rot);
    CHECK(std::fabs(projection_metric(rotated, x2) - projection_metric(x1, x2)) < 1e-10);
}

TEST_CASE("projection_metric triangle inequality on random triples") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        OrthonormalBasis a(random_orthonormal(7, 2, rng));
        OrthonormalBasis b(random_orthonormal(7, 2, rng));
        OrthonormalBasis c(random_orthonormal(7, 2, rng));
        CHECK(projection_metric(a, c) <= projection_metric(a, b) + projection_metric(b, c) + 1e-10);
    }
}

TEST_CASE("principal_angles of trivial pairs") {
    OrthonormalBasis e1 = span_of(2, 0);
    OrthonormalBasis e2 = span_of(2, 1);
    auto zero = principal_angles(e1, e1);
    CHECK(zero.size() == 1);
    CHECK(std::fabs(zero[0]) < 1e-7);
    auto right = principal_angles(e1, e2);
    CHECK(right[0] == doctest::Approx(3.14159265358979323846 / 2).epsilon(1e-12));
}

TEST_CASE("principal_angles cross-check against the projection metric") {
    Rng rng(31);
    OrthonormalBasis x1(random_orthonormal(10, 3, rng));
    OrthonormalBasis x2(random_orthonormal(10, 3, rng));
    auto angles = principal_angles(x1, x2);
    REQUIRE(angles.size() == 3);
    for (std::size_t i = 0; i + 1 < angles.size(); ++i) CHECK(angles[i] <= angles[i + 1] + 1e-12);
    double sum = 0.0;
    for (double t : angles) sum += std::sin(t) * std::sin(t);
    CHECK(std::fabs(projection_metric(x1, x2) - std::sqrt(sum)) < 1e-8);
}

TEST_CASE("riemannian_grad formula, zero case and linearity") {
    Rng rng(13);
    FRWeight w(gaussian_matrix(3, 7, rng));
    Matrix egrad = gaussian_matrix(3, 7, rng);

    Matrix got = riemannian_grad(w, egrad);
    // Independent naive evaluation of egrad - egrad w^T w.
    Matrix wt(7, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 7; ++j) wt(j, i) = w.w()(i, j);
    Matrix expect = egrad - (egrad * wt) * w.w();
    CHECK(max_abs(got - expect) < 1e-14);

    CHECK(max_abs(riemannian_grad(w, Matrix(3, 7))) == 0.0);

    Matrix doubled = riemannian_grad(w, 2.0 * egrad);
    CHECK(max_abs(doubled - 2.0 * got) < 1e-12);
}

TEST_CASE("riemannian_grad vanishes for row-orthonormal weights at egrad = w") {
    Rng rng(29);
    Matrix w_raw = transpose(random_orthonormal(6, 3, rng));
    FRWeight w(w_raw);
    CHECK(max_abs(riemannian_grad(w, w_raw)) < 1e-14);
}

TEST_CASE("retract PsdIdentity returns full-rank input unchanged") {
    Rng rng(2);
    Matrix w = gaussian_matrix(3, 8, rng);
    int rounds = -1;
    FRWeight out = retract(w, RetractionMode::PsdIdentity, 0, &rounds);
    CHECK(out.w().data() == w.data());
    CHECK(rounds == 0);
}

TEST_CASE("retract StiefelQr yields row-orthonormal weights") {
    Rng rng(2);
    Matrix w = gaussian_matrix(3, 8, rng);
    FRWeight out = retract(w, RetractionMode::StiefelQr);
    CHECK(frob_norm(mul_bt(out.w(), out.w()) - Matrix::identity(3)) < 1e-12);
}

TEST_CASE("retract StiefelQr is idempotent and fixes already-orthonormal rows") {
    Rng rng(37);
    Matrix w = gaussian_matrix(4, 9, rng);
    FRWeight once = retract(w, RetractionMode::StiefelQr);
    FRWeight twice = retract(once.w(), RetractionMode::StiefelQr);
    CHECK(max_abs(twice.w() - once.w()) < 1e-12);
}

TEST_CASE("retract escapes a rank-deficient input via jitter") {
    Matrix w(2, 4);  // zero matrix, rank 0
    int rounds = 0;
    FRWeight out = retract(w, RetractionMode::PsdIdentity, 99, &rounds);
    CHECK(rounds >= 1);
    CHECK(qr_diag_ratio(transpose(out.w())) > 1e-12);
}

TEST_CASE("FRWeight rejects rank-deficient and over-tall matrices") {
    CHECK_THROWS_AS(FRWeight(Matrix(2, 4)), RankDeficient);
    CHECK_THROWS_AS(FRWeight(Matrix(4, 2)), ShapeMismatch);
}

TEST_CASE("OrthonormalBasis rejects non-orthonormal columns") {
    Matrix bad(3, 2, {1, 0, 0, 2, 0, 0});
    CHECK_THROWS_AS(OrthonormalBasis(std::move(bad)), InvariantViolation);
}
