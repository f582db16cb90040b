// SPDX-License-Identifier: MIT
#include "fracwick/errors.hpp"
#include "fracwick/phi_hilbert.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace fracwick;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("phi_kernel against the 50-digit evaluation") {
    CHECK(phi_kernel(0, 1, Hurst(0.75)) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(rel(phi_kernel(1, 3, Hurst(0.75)), oracle::phi_kernel_50(1, 3, 0.75)) <= 1e-15);
    CHECK(rel(phi_kernel(1, 3, Hurst(0.75)), 0.2651650429449553) <= 1e-14);
    CHECK(rel(phi_kernel(0, 1, Hurst(0.51)), oracle::phi_kernel_50(0, 1, 0.51)) <= 1e-15);
    CHECK(rel(phi_kernel(0, 1, Hurst(0.51)), 0.0102) <= 1e-13);
    CHECK(phi_kernel(3, 1, Hurst(0.6)) == phi_kernel(1, 3, Hurst(0.6)));
    CHECK_THROWS_AS((void)phi_kernel(0.3, 0.3, Hurst(0.7)), DiagonalSingularity);
}

TEST_CASE("Hurst exponent must lie strictly inside (1/2, 1)") {
    CHECK_THROWS(Hurst(0.5));
    CHECK_THROWS(Hurst(1.0));
    CHECK_THROWS(Hurst(0.3));
    CHECK_NOTHROW(Hurst(0.51));
}

TEST_CASE("rect_inner examples") {
    const Hurst h(0.75);
    CHECK(rel(rect_inner(0, 2, 0, 2, h), 2.8284271247461903) <= 1e-15);
    CHECK(rect_inner(0, 1, 0, 1, h) == doctest::Approx(1.0).epsilon(1e-15));
    const double q = oracle::rect_quadrature(0, 1, 1, 2, 0.75);
    CHECK(std::abs(q - 0.41421356237309515) <= 1e-9);
    CHECK(std::abs(rect_inner(0, 1, 1, 2, h) - q) <= 1e-9);
}

TEST_CASE("rect_inner reproduces the fBm covariance on grid points") {
    auto grid = make_uniform_grid(2.0, 40);
    for (double hv : {0.55, 0.7, 0.9}) {
        const Hurst h(hv);
        for (std::size_t a = 1; a <= 40; a += 3) {
            for (std::size_t b = 1; b <= 40; b += 5) {
                const double s = grid->point(a), t = grid->point(b);
                const double cov = 0.5 * (std::pow(t, 2 * hv) + std::pow(s, 2 * hv) - std::pow(std::abs(t - s), 2 * hv));
                CHECK(rel(rect_inner(0, t, 0, s, h), cov) <= 1e-12);
            }
        }
    }
}

TEST_CASE("rect_inner matches 2-D quadrature of the singular kernel on random rectangles") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0), hu(0.55, 0.95);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        if (a > b) std::swap(a, b);
        if (c > d) std::swap(c, d);
        const double hv = hu(rng);
        const double exact = rect_inner(a, b, c, d, Hurst(hv));
        const double q = oracle::rect_quadrature(a, b, c, d, hv);
        worst = std::max(worst, std::abs(exact - q) / std::max(std::abs(q), 1e-3));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("inner_phi examples and structure") {
    const Hurst h(0.75);
    auto grid = make_uniform_grid(2.0, 8);
    auto gram = std::make_shared<const PhiGram>(grid, h);
    const auto chi = StepFunction::indicator(grid, 0, 1);
    CHECK(inner_phi(chi, chi, *gram) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(inner_phi(chi, StepFunction::zero(grid), *gram) == 0.0);
    // sigma = 0.5 on [0,1] against chi_[0,1]: bilinearity and rect_inner(0,1,0,1)
    const auto sigma = StepFunction::indicator(grid, 0, 1) * 0.5;
    CHECK(rel(inner_phi(sigma, chi, *gram), 0.5 * oracle::rect_quadrature(0, 1, 0, 1, 0.75)) <= 1e-9);

    SUBCASE("symmetric and bilinear") {
        std::vector<double> fv(8), gv(8);
        for (int m = 0; m < 8; ++m) {
            fv[m] = std::sin(1.0 + m);
            gv[m] = std::cos(2.0 * m);
        }
        const StepFunction f(grid, fv), g(grid, gv);
        CHECK(inner_phi(f, g, *gram) == doctest::Approx(inner_phi(g, f, *gram)).epsilon(1e-14));
        CHECK(inner_phi(f * 2.0 + g, chi, *gram) ==
              doctest::Approx(2.0 * inner_phi(f, chi, *gram) + inner_phi(g, chi, *gram)).epsilon(1e-13));
    }
    SUBCASE("cell Gram matrix is positive definite") {
        Eigen::LLT<Eigen::MatrixXd> llt(gram->entries());
        CHECK(llt.info() == Eigen::Success);
    }
    SUBCASE("mismatched grids are rejected") {
        auto other = make_uniform_grid(2.0, 4);
        CHECK_THROWS_AS((void)inner_phi(chi, StepFunction::indicator(other, 0, 1), *gram), GridMismatch);
    }
}

TEST_CASE("phi_transform against 1-D quadrature") {
    const Hurst h(0.75);
    auto grid = make_uniform_grid(2.0, 4);
    const auto chi = StepFunction::indicator(grid, 0, 1);
    const double q1 = oracle::phi_transform_quadrature(0, 1, 1, 0.75);
    CHECK(std::abs(q1 - 0.75) <= 1e-10);
    CHECK(std::abs(phi_transform(chi, 1.0, h) - q1) <= 1e-10);
    const double q2 = oracle::phi_transform_quadrature(0, 1, 2, 0.75);
    CHECK(std::abs(q2 - 0.75 * (std::sqrt(2.0) - 1.0)) <= 1e-10);
    CHECK(std::abs(phi_transform(chi, 2.0, h) - q2) <= 1e-10);
    CHECK(phi_transform(StepFunction::zero(grid), 0.7, h) == 0.0);
    CHECK(std::abs(phi_transform(chi, 0.25, h) - oracle::phi_transform_quadrature(0, 1, 0.25, 0.75)) <= 1e-10);

    SUBCASE("linear and finite at cell endpoints") {
        const StepFunction f(grid, {1.0, -2.0, 0.5, 3.0}), g(grid, {0.2, 0.0, 1.0, -1.0});
        for (double t : {0.0, 0.5, 1.0, 1.3, 2.0}) {
            const double lhs = phi_transform(f * 1.5 + g * -0.25, t, h);
            const double rhs = 1.5 * phi_transform(f, t, h) - 0.25 * phi_transform(g, t, h);
            CHECK(std::abs(lhs - rhs) <= 1e-12);
            CHECK(std::isfinite(phi_transform(f, t, h)));
        }
    }
}

TEST_CASE("Gram-Schmidt") {
    const double hv = 0.7;
    auto grid = make_uniform_grid(1.5, 12);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(hv));

    SUBCASE("single full indicator is scaled by T^H") {
        const std::vector<StepFunction> seed{StepFunction::constant(grid, 1.0)};
        const PhiBasis b = gram_schmidt(gram, seed, 1);
        const double norm = std::sqrt(oracle::rect_quadrature(0, 1.5, 0, 1.5, hv));
        for (double v : b.vector(0).values()) CHECK(std::abs(v - 1.0 / norm) <= 1e-9);
        CHECK(rel(1.0 / b.vector(0).values()[0], std::pow(1.5, hv)) <= 1e-12);
    }
    SUBCASE("orthonormal for every seed family") {
        for (auto family : {SeedFamily::legendre, SeedFamily::indicator, SeedFamily::dyadic}) {
            const auto seeds = make_seed_family(family, grid, 12, 12);
            const PhiBasis b = gram_schmidt(gram, seeds, 12);
            CHECK(b.orthonormality_defect() <= kOrthonormalityTolerance);
            CHECK(std::abs(inner_phi(b.vector(0), b.vector(1), *gram)) <= 1e-10);
        }
    }
    SUBCASE("full indicator basis reproduces any step function") {
        const auto seeds = make_seed_family(SeedFamily::indicator, grid, 12);
        const PhiBasis b = gram_schmidt(gram, seeds, 12);
        std::vector<double> fv(12);
        for (int m = 0; m < 12; ++m) fv[m] = std::exp(0.1 * m) * std::cos(0.7 * m);
        const StepFunction f(grid, fv);
        StepFunction proj = StepFunction::zero(grid);
        for (std::size_t k = 0; k < 12; ++k) proj = proj + b.vector(k) * inner_phi(f, b.vector(k), *gram);
        // Oracle: solve the Gram system for the coefficients in the seed span.
        Eigen::VectorXd rhs(12);
        for (int m = 0; m < 12; ++m) rhs(m) = inner_phi(f, seeds[m], *gram);
        const Eigen::VectorXd alpha = gram->entries().ldlt().solve(rhs);
        for (int m = 0; m < 12; ++m) {
            CHECK(std::abs(proj.values()[m] - fv[m]) <= 1e-10);
            CHECK(std::abs(alpha(m) - fv[m]) <= 1e-10);
        }
    }
    SUBCASE("dependent seeds are refused with the offending index") {
        std::vector<StepFunction> seeds{StepFunction::indicator(grid, 0, 0.5), StepFunction::indicator(grid, 0.5, 1.5),
                                        StepFunction::constant(grid, 2.0)};
        CHECK_THROWS_AS((void)gram_schmidt(gram, seeds, 3), DegenerateFamily);
        try {
            (void)gram_schmidt(gram, seeds, 3);
        } catch (const DegenerateFamily& e) {
            CHECK(e.index() == 2);
        }
    }
}

TEST_CASE("Cameron-Martin table agrees with the integral of Phi[e_k]") {
    // cm(k, n) = int_0^{tau_n} Phi[e_k](v) dv; midpoint sums converge at O(delta).
    auto grid = make_uniform_grid(1.0, 8);
    const Hurst h(0.75);
    auto gram = std::make_shared<const PhiGram>(grid, h);
    const PhiBasis b = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 3), 3);
    auto riemann = [&](std::size_t k, double upper, int pieces) {
        double acc = 0.0;
        const double dv = upper / pieces;
        for (int j = 0; j < pieces; ++j) acc += phi_transform(b.vector(k), (j + 0.5) * dv, h) * dv;
        return acc;
    };
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t n : {3u, 8u}) {
            const double coarse = std::abs(riemann(k, grid->point(n), 200) - b.cm(k, n));
            const double fine = std::abs(riemann(k, grid->point(n), 1600) - b.cm(k, n));
            CHECK(fine <= 5e-3);
            CHECK(fine <= coarse + 1e-12);
        }
    }
}

TEST_CASE("basis CSV round trip") {
    auto grid = make_uniform_grid(1.0, 16);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.8));
    const PhiBasis b = gram_schmidt(gram, make_seed_family(SeedFamily::dyadic, grid, 8, 8), 8);
    std::stringstream buf;
    write_basis_csv(buf, b);
    const PhiBasis back = read_basis_csv(buf, gram);
    REQUIRE(back.size() == b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
        for (std::size_t m = 0; m < 16; ++m) CHECK(back.vector(k).values()[m] == b.vector(k).values()[m]);
    }
}
