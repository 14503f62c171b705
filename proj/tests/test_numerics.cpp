#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "mmattack/errors.hpp"
#include "mmattack/numerics.hpp"
#include "oracles.hpp"

using namespace mmattack;

TEST_CASE("mahalanobis_sq worked values") {
    const Vector zero{0, 0};
    CHECK(mahalanobis_sq(Vector{1, 0}, zero, Matrix::identity(2)) == 1.0);

    Rng rng(3);
    const Matrix s_inv = regularized_inverse(fixture::random_spd(2, rng), 1e-3);
    CHECK(mahalanobis_sq(Vector{3, 7}, Vector{3, 7}, s_inv) == 0.0);

    const Vector diag{4, 1};
    const Matrix inv = regularized_inverse(Matrix::diagonal(diag), 0.0);
    CHECK(mahalanobis_sq(Vector{2, 0}, zero, inv) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mahalanobis_sq rejects bad input") {
    CHECK_THROWS_AS(mahalanobis_sq(Vector{1, 2}, Vector{1}, Matrix::identity(2)), InvalidArgument);
    CHECK_THROWS_AS(mahalanobis_sq(Vector{1, 2}, Vector{1, 2}, Matrix::identity(3)), InvalidArgument);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(mahalanobis_sq(Vector{nan, 0}, Vector{0, 0}, Matrix::identity(2)), InvalidArgument);
    CHECK_THROWS_AS(mahalanobis_sq(Vector{INFINITY, 0}, Vector{0, 0}, Matrix::identity(2)), InvalidArgument);
}

TEST_CASE("mahalanobis_sq properties on random vectors") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 9;
        const Vector x = fixture::random_vector(n, rng, -5, 5);
        const Vector y = fixture::random_vector(n, rng, -5, 5);
        const Matrix s_inv = regularized_inverse(fixture::random_spd(n, rng), 1e-3);

        CHECK(mahalanobis_sq(x, x, s_inv) == 0.0);
        CHECK(std::abs(mahalanobis_sq(x, y, Matrix::identity(n)) - squared_euclidean(x, y)) <= 1e-12);
        CHECK(std::abs(mahalanobis_sq(x, y, s_inv) - mahalanobis_sq(y, x, s_inv)) <= 1e-12);
        CHECK(mahalanobis_sq(x, y, s_inv) > 0.0);
        CHECK(std::abs(mahalanobis_sq(x, y, s_inv) - oracle::quad_form(x, y, s_inv)) <=
              1e-12 * std::max(1.0, oracle::quad_form(x, y, s_inv)));
    }
}

TEST_CASE("covariance") {
    SUBCASE("one-axis variance") {
        const std::vector<Vector> xs{{0, 0}, {2, 0}};
        const Matrix s = covariance(xs);
        CHECK(s(0, 0) == 2.0);
        CHECK(s(0, 1) == 0.0);
        CHECK(s(1, 0) == 0.0);
        CHECK(s(1, 1) == 0.0);
    }
    SUBCASE("identical vectors give zero") {
        const std::vector<Vector> xs(5, Vector{1.5, -2, 3});
        const Matrix s = covariance(xs);
        for (double v : s.data()) CHECK(v == 0.0);
    }
    SUBCASE("rejects fewer than two vectors") {
        const std::vector<Vector> one{{1, 2}};
        CHECK_THROWS_AS(covariance(one), InvalidArgument);
        CHECK_THROWS_AS(covariance(std::vector<Vector>{}), InvalidArgument);
        const std::vector<Vector> ragged{{1, 2}, {1}};
        CHECK_THROWS_AS(covariance(ragged), InvalidArgument);
    }
    SUBCASE("diagonal generator against two-pass oracle") {
        Rng rng(5);
        const double sd[3] = {1.0, 2.0, 0.5};
        std::vector<Vector> xs;
        for (int i = 0; i < 50; ++i) {
            Vector x(3);
            for (int j = 0; j < 3; ++j) x[j] = std::normal_distribution<double>(0.0, sd[j])(rng);
            xs.push_back(x);
        }
        const Matrix s = covariance(xs);
        const Matrix ref = oracle::two_pass_covariance(xs);
        CHECK(is_symmetric(s));
        for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(s.data()[i] - ref.data()[i]) <= 1e-12);
        // sampling error of a variance estimate with n = 50 is about sqrt(2/49) relative
        for (int j = 0; j < 3; ++j) CHECK(std::abs(s(j, j) - sd[j] * sd[j]) <= 4.0 * std::sqrt(2.0 / 49.0) * sd[j] * sd[j]);
    }
}

TEST_CASE("regularized_inverse") {
    SUBCASE("identity") { CHECK(regularized_inverse(Matrix::identity(3), 0.0) == Matrix::identity(3)); }
    SUBCASE("pure regularizer") {
        const Matrix inv = regularized_inverse(Matrix(2, 2), 0.5);
        // 1 / sqrt(0.5)^2 carries one rounding
        CHECK(inv(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(inv(1, 1) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(inv(0, 1) == 0.0);
    }
    SUBCASE("multiply back") {
        Rng rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            // PSD and rank deficient: A A^T with A 5x3
            Matrix a(5, 3);
            for (auto& x : a.data()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
            Matrix s(5, 5);
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j)
                    for (std::size_t k = 0; k < 3; ++k) s(i, j) += a(i, k) * a(j, k);
            Matrix reg = s;
            for (std::size_t i = 0; i < 5; ++i) reg(i, i) += 1e-3;
            const Matrix inv = regularized_inverse(s, 1e-3);
            CHECK(is_symmetric(inv));
            CHECK(frobenius_norm(inv * reg - Matrix::identity(5)) <= 1e-9);
            const Vector x = fixture::random_vector(5, rng);
            CHECK(mahalanobis_sq(x, Vector(5, 0.0), inv) > 0.0);
        }
    }
    SUBCASE("errors") {
        Matrix ns = Matrix::identity(2);
        ns(0, 1) = 0.3;
        CHECK_THROWS_AS(regularized_inverse(ns, 1e-3), InvalidArgument);
        CHECK_THROWS_AS(regularized_inverse(Matrix(2, 3), 1e-3), InvalidArgument);
        Matrix neg = Matrix::identity(2);
        neg(1, 1) = -1.0;
        CHECK_THROWS_AS(regularized_inverse(neg, 1e-3), NumericalError);
    }
}

TEST_CASE("linf_clip") {
    CHECK(linf_clip(Vector{-10, 3, 9}, 8) == Vector{-8, 3, 8});
    CHECK(linf_clip(Vector(6, 0.0), 8) == Vector(6, 0.0));
    CHECK(linf_clip(Vector{8.0, -8.0}, 8) == Vector{8.0, -8.0});

    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector v = fixture::random_vector(40, rng, -20, 20);
        const Vector once = linf_clip(v, 8);
        CHECK(linf_clip(once, 8) == once);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (std::abs(v[i]) <= 8) CHECK(once[i] == v[i]);
            CHECK(std::abs(once[i]) <= 8.0);
        }
        Vector inplace = v;
        linf_clip_inplace(inplace, 8);
        CHECK(inplace == once);
    }
}

TEST_CASE("norms") {
    const Vector v{0, -1, 0, 1};
    CHECK(l0_norm(v) == 2);
    CHECK(l2_norm(v) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(l1_norm(v) == 2.0);
    const Vector z(7, 0.0);
    CHECK(l0_norm(z) == 0);
    CHECK(l1_norm(z) == 0.0);
    CHECK(l2_norm(z) == 0.0);

    Rng rng(9);
    Vector r = fixture::random_vector(100, rng, -3, 3);
    for (std::size_t i = 0; i < r.size(); i += 7) r[i] = 0.0;
    std::size_t l0 = 0;
    double l1 = 0.0, sq = 0.0, linf = 0.0;
    for (double x : r) {
        if (x != 0.0) ++l0;
        l1 += std::abs(x);
        sq += x * x;
        linf = std::max(linf, std::abs(x));
    }
    CHECK(l0_norm(r) == l0);
    CHECK(l1_norm(r) == l1);
    CHECK(l2_norm(r) == std::sqrt(sq));
    CHECK(linf_norm(r) == linf);
}

TEST_CASE("cholesky reproduces its input") {
    Rng rng(4);
    const Matrix s = fixture::random_spd(6, rng);
    const Matrix l = cholesky(s);
    Matrix lt(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            lt(i, j) = l(j, i);
            if (j > i) CHECK(l(i, j) == 0.0);
        }
    CHECK(frobenius_norm(l * lt - s) <= 1e-12 * frobenius_norm(s));
}
