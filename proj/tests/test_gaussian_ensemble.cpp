// SPDX-License-Identifier: MIT
#include "fracwick/gaussian_ensemble.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace fracwick;

namespace {

struct Moments {
    double mean_a = 0, mean_b = 0, var_a = 0, var_b = 0, cov = 0;
    double corr() const { return cov / std::sqrt(var_a * var_b); }
};

Moments moments(const SampleBatch& batch, std::size_t a, std::size_t b) {
    Moments m;
    const double n = static_cast<double>(batch.count);
    for (std::size_t j = 0; j < batch.count; ++j) {
        m.mean_a += batch.draw(j)[a] / n;
        m.mean_b += batch.draw(j)[b] / n;
    }
    for (std::size_t j = 0; j < batch.count; ++j) {
        const double x = batch.draw(j)[a] - m.mean_a, y = batch.draw(j)[b] - m.mean_b;
        m.var_a += x * x / (n - 1);
        m.var_b += y * y / (n - 1);
        m.cov += x * y / (n - 1);
    }
    return m;
}

}  // namespace

TEST_CASE("covariance of a basis-only frame is the identity") {
    auto grid = make_uniform_grid(1.0, 16);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.75));
    const PhiBasis b = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 5), 5);
    const CovarianceModel m = build_covariance(GaussianFrame{{b.vectors()}}, *gram);
    CHECK((m.matrix() - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(m.jitter_used() == 0.0);
}

TEST_CASE("two-indicator frame matches the rectangle quadrature") {
    auto grid = make_uniform_grid(2.0, 2);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.75));
    GaussianFrame frame{{{StepFunction::indicator(grid, 0, 1), StepFunction::indicator(grid, 1, 2)}}};
    const CovarianceModel m = build_covariance(frame, *gram);
    const double off = oracle::rect_quadrature(0, 1, 1, 2, 0.75);
    CHECK(std::abs(m.matrix()(0, 1) - off) <= 1e-9);
    CHECK(std::abs(m.matrix()(1, 0) - off) <= 1e-9);
    CHECK(std::abs(m.matrix()(0, 0) - 1.0) <= 1e-12);
    CHECK(std::abs(off - 0.414214) <= 1e-6);

    SUBCASE("sample correlation") {
        const SampleBatch batch = sample(m, 100000, 2024);
        CHECK(std::abs(moments(batch, 0, 1).corr() - off) <= 0.02);
    }
}

TEST_CASE("independent components give zero cross covariance") {
    auto grid = make_uniform_grid(1.0, 8);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.6));
    const auto f = StepFunction::indicator(grid, 0, 0.5);
    const auto g = StepFunction::indicator(grid, 0.25, 1.0) * 2.0;
    GaussianFrame frame{{{f, g}, {f, g, f + g}}};
    const CovarianceModel m = build_covariance(frame, *gram);
    REQUIRE(m.dimension() == 5);
    const Eigen::MatrixXd c = m.matrix();
    for (int a = 0; a < 2; ++a) {
        for (int b = 2; b < 5; ++b) CHECK(c(a, b) == 0.0);
    }
    CHECK(c(2, 3) == doctest::Approx(inner_phi(f, g, *gram)).epsilon(1e-14));
}

TEST_CASE("degenerate frames") {
    auto grid = make_uniform_grid(1.0, 8);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.7));

    SUBCASE("all-zero kernels draw the zero vector") {
        GaussianFrame frame{{{StepFunction::zero(grid), StepFunction::zero(grid)}}};
        const SampleBatch batch = sample(build_covariance(frame, *gram), 1, 99);
        CHECK(batch.draw(0)[0] == 0.0);
        CHECK(batch.draw(0)[1] == 0.0);
    }
    SUBCASE("linearly dependent kernels reproduce the dependence in every draw") {
        const auto f = StepFunction::indicator(grid, 0, 0.5);
        const auto g = StepFunction::indicator(grid, 0.5, 1.0);
        GaussianFrame frame{{{f, g, f + g * 3.0}}};
        const CovarianceModel m = build_covariance(frame, *gram);
        const Eigen::MatrixXd l = m.factor();
        CHECK((l * l.transpose() - m.matrix()).cwiseAbs().maxCoeff() <= 1e-8 + m.jitter_used());
        const SampleBatch batch = sample(m, 200, 5);
        double worst = 0.0;
        for (std::size_t j = 0; j < batch.count; ++j) {
            const auto d = batch.draw(j);
            worst = std::max(worst, std::abs(d[2] - d[0] - 3.0 * d[1]));
        }
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("semidefinite Cholesky") {
    Eigen::MatrixXd a(3, 3);
    a << 4, 2, 6, 2, 2, 3, 6, 3, 9;  // rank 2: row 3 = 1.5 * row 1
    Eigen::MatrixXd l;
    REQUIRE(semidefinite_cholesky(a, l));
    CHECK((l * l.transpose() - a).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::MatrixXd neg(2, 2);
    neg << 1, 2, 2, 1;
    CHECK_FALSE(semidefinite_cholesky(neg, l));
}

TEST_CASE("sampling") {
    auto grid = make_uniform_grid(1.0, 16);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.75));
    const PhiBasis b = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 3), 3);
    const CovarianceModel m = build_covariance(GaussianFrame{{b.vectors()}}, *gram);

    SUBCASE("standard normal coordinates") {
        const std::size_t n = 100000;
        const SampleBatch batch = sample(m, n, 77);
        for (std::size_t q = 0; q < 3; ++q) {
            const Moments mo = moments(batch, q, (q + 1) % 3);
            CHECK(std::abs(mo.mean_a) <= 4.0 / std::sqrt(static_cast<double>(n)));
            CHECK(std::abs(mo.var_a - 1.0) <= 0.02);
            CHECK(std::abs(mo.cov) <= 0.02);
        }
    }
    SUBCASE("deterministic and independent of the worker count") {
        const SampleBatch a = sample(m, 1001, 3, 1);
        const SampleBatch b2 = sample(m, 1001, 3, 1);
        const SampleBatch c = sample(m, 1001, 3, 4);
        CHECK(a.draws == b2.draws);
        CHECK(a.draws == c.draws);
        const SampleBatch other = sample(m, 1001, 4, 1);
        CHECK(a.draws != other.draws);
    }
    SUBCASE("a batch prefix does not depend on the batch size") {
        const SampleBatch small = sample(m, 10, 8);
        const SampleBatch large = sample(m, 1000, 8, 3);
        for (std::size_t j = 0; j < 10; ++j) {
            for (std::size_t q = 0; q < 3; ++q) CHECK(small.draw(j)[q] == large.draw(j)[q]);
        }
    }
}

TEST_CASE("CRN cross covariance converges to the phi inner product") {
    auto grid = make_uniform_grid(1.0, 16);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.7));
    const PhiBasis b = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 2), 2);
    const auto sigma = StepFunction::constant(grid, 0.5).restrict_to(0, 0.75);
    GaussianFrame frame{{{b.vector(0), b.vector(1), sigma}}};
    const SampleBatch batch = sample(build_covariance(frame, *gram), 100000, 31);
    for (std::size_t k = 0; k < 2; ++k) {
        const double target = inner_phi(b.vector(k), sigma, *gram);
        CHECK(std::abs(moments(batch, k, 2).cov - target) <= 4.0 * 0.5 / std::sqrt(1e5) + 1e-3);
    }
}

TEST_CASE("Cameron-Martin partial sums") {
    auto grid = make_uniform_grid(1.0, 16);
    const double hv = 0.75;
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(hv));
    const PhiBasis full = gram_schmidt(gram, make_seed_family(SeedFamily::indicator, grid, 16), 16);
    for (double s : {0.25, 0.5, 1.0}) {
        for (double t : {0.125, 0.75, 1.0}) {
            const double exact = oracle::rect_quadrature(0, t, 0, s, hv);
            CHECK(std::abs(cm_partial_sum_covariance(full, s, t, 16) - exact) <= 1e-8);
            CHECK(std::abs(fbm_covariance(s, t, Hurst(hv)) - exact) <= 1e-8);
        }
    }
    CHECK(cm_partial_sum_covariance(full, 1, 1, 0) == 0.0);
    const PhiBasis leg = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 8), 8);
    double previous = 0.0;
    for (std::size_t k = 1; k <= 8; ++k) {
        const double v = cm_partial_sum_covariance(leg, 1, 1, k);
        CHECK(v <= 1.0 + 1e-12);
        CHECK(v >= previous - 1e-15);
        previous = v;
    }
}
