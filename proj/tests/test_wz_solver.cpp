// SPDX-License-Identifier: MIT
#include "fracwick/errors.hpp"
#include "fracwick/gaussian_ensemble.hpp"
#include "fracwick/wz_solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace fracwick;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> out(n);
    for (auto& x : out) x = nd(rng);
    return out;
}

struct Setup {
    GridPtr grid;
    std::shared_ptr<const PhiGram> gram;
    PhiBasis basis;
    SolverGrid sgrid;
    std::vector<StepFunction> sigma;
    std::shared_ptr<const SigmaCoeffs> coeffs;

    Setup(double hv, std::size_t cells, std::size_t steps, std::size_t k, std::vector<std::vector<double>> sig)
        : grid(make_uniform_grid(1.0, cells)),
          gram(std::make_shared<const PhiGram>(grid, Hurst(hv))),
          basis(gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, k), k)),
          sgrid(1.0, steps) {
        for (auto& s : sig) {
            sigma.push_back(s.size() == 1 ? StepFunction::constant(grid, s[0]) : StepFunction(grid, s));
        }
        coeffs = std::make_shared<const SigmaCoeffs>(basis, sigma, sgrid.nodes());
    }

    ProblemSpec spec(const std::string& drift, std::vector<double> c, std::map<std::string, double> p = {}) const {
        return ProblemSpec{make_drift(drift, p), sigma, std::move(c), gram->hurst(), 1.0};
    }
};

/// Exact-model counterpart of oracle::NaiveSolver, built from inner_phi on
/// chi sigma directly.
struct NaiveReference {
    const ProblemSpec& spec;
    const PhiGram& gram;
    const SolverGrid& grid;
    std::span<const double> g;  // g[i * N + m]

    struct Interval {
        std::size_t comp, a, b;
    };

    double inner(std::size_t i, std::size_t r, std::size_t t, std::size_t a, std::size_t b) const {
        const StepFunction x = spec.sigma[i].restrict_to(grid.node(r), grid.node(t));
        const StepFunction y = spec.sigma[i].restrict_to(grid.node(a), grid.node(b));
        return inner_phi(x, y, gram);
    }

    double exponential(std::size_t i, std::size_t r, std::size_t t, const std::vector<Interval>& shift) const {
        double log_e = -0.5 * inner(i, r, t, r, t);
        for (std::size_t m = r; m < t; ++m) log_e += g[i * grid.steps() + m];
        for (const auto& s : shift) {
            if (s.comp == i) log_e -= inner(i, r, t, s.a, s.b);
        }
        return std::exp(log_e);
    }

    std::vector<double> value(std::size_t n, const std::vector<Interval>& shift) const {
        std::vector<double> out(spec.dimension());
        for (std::size_t i = 0; i < out.size(); ++i) {
            double acc = spec.c[i] * exponential(i, 0, n, shift);
            for (std::size_t m = 0; m < n; ++m) {
                auto next = shift;
                next.push_back({i, m, n});
                acc += grid.delta() * spec.drift.value(i, grid.node(m), value(m, next)) * exponential(i, m, n, shift);
            }
            out[i] = acc;
        }
        return out;
    }
};

double max_rel(const PathSolution& x, const std::function<double(std::size_t, std::size_t)>& ref) {
    double worst = 0.0;
    for (Eigen::Index n = 0; n < x.values.rows(); ++n) {
        for (Eigen::Index i = 0; i < x.values.cols(); ++i) {
            const double r = ref(static_cast<std::size_t>(n), static_cast<std::size_t>(i));
            worst = std::max(worst, std::abs(x.values(n, i) - r) / std::max(std::abs(r), 1e-300));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("shift descriptors are canonical") {
    using S = ShiftDescriptor::Segment;
    const auto d = ShiftDescriptor::from_segments({{0, 3, 5}, {1, 2, 2}, {0, 1, 3}, {1, 4, 6}, {0, 7, 8}});
    REQUIRE(d.depth() == 3);
    CHECK(d.segments()[0] == S{0, 1, 5});
    CHECK(d.segments()[1] == S{1, 4, 6});
    CHECK(d.segments()[2] == S{0, 7, 8});
    CHECK(ShiftDescriptor::from_segments({d.segments().begin(), d.segments().end()}) == d);
    CHECK(ShiftDescriptor().appended(0, 4, 4).empty());
    CHECK(ShiftDescriptor().appended(0, 2, 4).appended(0, 4, 6) == ShiftDescriptor().appended(0, 2, 6));
    CHECK_FALSE(ShiftDescriptor().appended(0, 2, 4).appended(1, 4, 6) == ShiftDescriptor().appended(0, 2, 6));
}

TEST_CASE("zero drift gives c E^K(0,t)") {
    Setup s(0.7, 32, 8, 4, {{0.5}, {0.3}});
    const ProblemSpec spec = s.spec("zero", {1.5, -0.4});
    const auto z = normals(8, 3);
    const PathSolution x = solve_truncated(spec, s.coeffs, 4, s.sgrid, z);
    CHECK(x.at(0, 0) == 1.5);
    CHECK(x.at(0, 1) == -0.4);
    CHECK(max_rel(x, [&](std::size_t n, std::size_t i) {
              const std::span<const double> zi(z.data() + 4 * i, 4);
              return spec.c[i] * wick_exponential(zi, s.coeffs->shifts(i, 0, n, 4), projection_norm_sq(*s.coeffs, i, 0, n, 4)).value;
          }) <= 1e-14);

    SUBCASE("reference solver reproduces geometric fBm") {
        const auto g = normals(16, 4);
        const PathSolution r = solve_reference(spec, *s.gram, s.sgrid, g);
        CHECK(max_rel(r, [&](std::size_t n, std::size_t i) {
                  double lg = 0.0;
                  for (std::size_t m = 0; m < n; ++m) lg += g[i * 8 + m];
                  const double sig = i == 0 ? 0.5 : 0.3;
                  const double v = sig * sig * std::pow(s.sgrid.node(n), 1.4);
                  return spec.c[i] * std::exp(lg - 0.5 * v);
              }) <= 1e-13);
    }
}

TEST_CASE("sigma = 0 reduces both solvers to explicit Euler") {
    Setup s(0.65, 24, 12, 3, {{0.0}, {0.0}});
    for (const char* drift : {"sin", "coupled_sin", "tanh"}) {
        const ProblemSpec spec = s.spec(drift, {0.8, -1.2});
        std::vector<std::vector<double>> euler{{0.8, -1.2}};
        for (std::size_t n = 1; n <= 12; ++n) {
            const auto& prev = euler.back();
            std::vector<double> next(2);
            for (std::size_t i = 0; i < 2; ++i) next[i] = prev[i] + s.sgrid.delta() * spec.drift.value(i, s.sgrid.node(n - 1), prev);
            euler.push_back(next);
        }
        const PathSolution a = solve_truncated(spec, s.coeffs, 3, s.sgrid, normals(6, 1));
        const PathSolution b = solve_reference(spec, *s.gram, s.sgrid, std::vector<double>(24, 0.0));
        auto ref = [&](std::size_t n, std::size_t i) { return euler[n][i]; };
        CHECK(max_rel(a, ref) <= 1e-14);
        CHECK(max_rel(b, ref) <= 1e-14);
    }
}

TEST_CASE("memoized recursion agrees with the naive expansion") {
    SUBCASE("d = 1, sin drift, N = 4, K = 2") {
        Setup s(0.75, 16, 4, 2, {{0.5}});
        const ProblemSpec spec = s.spec("sin", {1.0});
        const auto z = normals(2, 11);
        const oracle::NaiveSolver naive{spec, *s.coeffs, 2, s.sgrid, z};
        for (bool general : {false, true}) {
            const PathSolution x = solve_truncated(spec, s.coeffs, 2, s.sgrid, z, {16, general});
            CHECK(max_rel(x, [&](std::size_t n, std::size_t) { return naive.value(n, {})[0]; }) <= 1e-12);
        }
    }
    SUBCASE("instances up to N = 6") {
        std::vector<double> varying(24);
        for (int m = 0; m < 24; ++m) varying[m] = 0.3 + 0.25 * std::cos(0.4 * m);
        for (std::size_t steps : {1u, 3u, 6u}) {
            Setup s1(0.8, 24, steps, 3, {varying});
            Setup s2(0.6, 24, steps, 3, {{0.5}, varying});
            struct Case {
                Setup* s;
                std::string drift;
                std::vector<double> c;
            };
            for (const Case& cs : {Case{&s1, "tanh", {0.4}}, Case{&s2, "coupled_sin", {1.0, -0.5}},
                                   Case{&s2, "sin", {0.7, 0.2}}}) {
                const ProblemSpec spec = cs.s->spec(cs.drift, cs.c, cs.drift == "tanh" ? std::map<std::string, double>{{"amplitude", 2.0}, {"scale", 1.5}} : std::map<std::string, double>{});
                const std::size_t d = spec.dimension();
                const auto z = normals(3 * d, 100 + steps);
                const oracle::NaiveSolver naive{spec, *cs.s->coeffs, 3, cs.s->sgrid, z};
                const PathSolution x = solve_truncated(spec, cs.s->coeffs, 3, cs.s->sgrid, z);
                CHECK(max_rel(x, [&](std::size_t n, std::size_t i) { return naive.value(n, {})[i]; }) <= 1e-12);

                const auto g = normals(steps * d, 200 + steps);
                const NaiveReference ref{spec, *cs.s->gram, cs.s->sgrid, g};
                const PathSolution r = solve_reference(spec, *cs.s->gram, cs.s->sgrid, g);
                CHECK(max_rel(r, [&](std::size_t n, std::size_t i) { return ref.value(n, {})[i]; }) <= 1e-12);
            }
        }
    }
}

TEST_CASE("fast-path tables hold the shifted values") {
    Setup s(0.7, 20, 5, 3, {{0.5}});
    const ProblemSpec spec = s.spec("sin", {1.0});
    const auto z = normals(3, 5);
    const oracle::NaiveSolver naive{spec, *s.coeffs, 3, s.sgrid, z};
    const TruncatedModel model(s.coeffs, 3);
    const MildEngine engine(spec, s.sgrid, model.geometry());
    REQUIRE(engine.uses_fast_path());
    const auto table = engine.shifted_table(model.levels(z));
    for (std::size_t m = 0; m <= 5; ++m) {
        for (std::size_t p = m; p <= 5; ++p) {
            const double want = naive.value(m, {{0, m, p}})[0];
            CHECK(std::abs(table[0](m, p) - want) <= 1e-12 * std::abs(want));
        }
    }
    const PathSolution x = engine.solve(model.levels(z));
    CHECK(engine.value_at(model.levels(z), 0, 4) == doctest::Approx(x.at(4, 0)).epsilon(1e-14));
    CHECK(engine.value_at(model.levels(z), 3)(0) == doctest::Approx(x.at(3, 0)).epsilon(1e-14));
}

TEST_CASE("descriptor closure for a single component") {
    Setup s(0.7, 16, 8, 3, {{0.5}});
    const ProblemSpec spec = s.spec("sin", {1.0});
    const PathSolution x = solve_truncated(spec, s.coeffs, 3, s.sgrid, normals(3, 9), {16, true});
    CHECK(x.diagnostics.max_chain_depth <= 1);
    CHECK_FALSE(x.diagnostics.fast_path);
    Setup s2(0.7, 24, 6, 3, {{0.5}, {0.4}});
    const PathSolution y = solve_truncated(s2.spec("coupled_sin", {1.0, 0.5}), s2.coeffs, 3, s2.sgrid, normals(6, 9));
    CHECK(y.diagnostics.max_chain_depth >= 2);
}

TEST_CASE("complexity guard for coupled drift") {
    Setup s(0.7, 34, 17, 2, {{0.5}, {0.5}});
    const ProblemSpec spec = s.spec("coupled_sin", {1.0, 1.0});
    CHECK_THROWS_AS((void)solve_truncated(spec, s.coeffs, 2, s.sgrid, normals(4, 1)), ComplexityGuard);
    CHECK_THROWS_AS((void)solve_reference(spec, *s.gram, s.sgrid, normals(34, 1)), ComplexityGuard);
    try {
        (void)solve_truncated(spec, s.coeffs, 2, s.sgrid, normals(4, 1));
    } catch (const ComplexityGuard& e) {
        CHECK(e.estimated_nodes() > 0.0);
    }
    // decoupled drift in two components stays on the fast path
    CHECK_NOTHROW((void)solve_truncated(s.spec("sin", {1.0, 1.0}), s.coeffs, 2, s.sgrid, normals(4, 1)));
}

TEST_CASE("exact-projection coupling: truncated equals reference pathwise") {
    // Basis: orthonormalized grid-cell kernels of sigma, K = N.
    const std::size_t steps = 8, cells = 32;
    auto grid = make_uniform_grid(1.0, cells);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.7));
    std::vector<double> sv(cells);
    for (std::size_t m = 0; m < cells; ++m) sv[m] = 0.5 + 0.3 * std::sin(0.3 * static_cast<double>(m));
    const StepFunction sigma(grid, sv);
    const SolverGrid sgrid(1.0, steps);
    std::vector<StepFunction> seeds;
    for (std::size_t m = 0; m < steps; ++m) seeds.push_back(sigma.restrict_to(sgrid.node(m), sgrid.node(m + 1)));
    const PhiBasis basis = gram_schmidt(gram, seeds, steps);
    const std::vector<StepFunction> sig{sigma};
    auto coeffs = std::make_shared<const SigmaCoeffs>(basis, sig, sgrid.nodes());
    const ProblemSpec spec{make_drift("sin"), sig, {1.0}, Hurst(0.7), 1.0};
    const CovarianceModel model = build_covariance(make_crn_frame(basis, steps, sig, sgrid), *gram);

    double worst = 0.0;
    std::vector<double> z(steps), g(steps);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const SampleBatch batch = sample(model, 5, seed);
        for (std::size_t j = 0; j < batch.count; ++j) {
            split_crn_draw(batch.draw(j), 1, steps, steps, z, g);
            const PathSolution a = solve_truncated(spec, coeffs, steps, sgrid, z);
            const PathSolution b = solve_reference(spec, *gram, sgrid, g);
            worst = std::max(worst, (a.values - b.values).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("Riemann refinement halves the discretization defect") {
    auto grid = make_uniform_grid(1.0, 128);
    auto gram = std::make_shared<const PhiGram>(grid, Hurst(0.75));
    const PhiBasis basis = gram_schmidt(gram, make_seed_family(SeedFamily::legendre, grid, 3), 3);
    const std::vector<StepFunction> sig{StepFunction::constant(grid, 0.4)};
    const ProblemSpec spec{make_drift("sin"), sig, {1.0}, Hurst(0.75), 1.0};
    const std::vector<double> z{0.3, -0.6, 0.9};
    auto end_value = [&](std::size_t steps) {
        const SolverGrid sg(1.0, steps);
        auto coeffs = std::make_shared<const SigmaCoeffs>(basis, sig, sg.nodes());
        return solve_truncated(spec, coeffs, 3, sg, z).at(steps, 0);
    };
    std::vector<double> defects;
    for (std::size_t n : {4u, 8u, 16u, 32u, 64u}) defects.push_back(std::abs(end_value(n) - end_value(2 * n)));
    // at least first order everywhere; the ratio settles toward 2 from above
    for (std::size_t j = 1; j < defects.size(); ++j) {
        const double ratio = defects[j - 1] / defects[j];
        CHECK(ratio >= 1.6);
        if (j + 1 < defects.size()) CHECK(ratio >= defects[j] / defects[j + 1]);
    }
    const double finest = defects[defects.size() - 2] / defects.back();
    CHECK(finest <= 2.5);
}

TEST_CASE("forward sensitivities") {
    SUBCASE("zero drift: Sigma_k(0,t) X(t)") {
        Setup s(0.7, 16, 8, 3, {{0.5}});
        const ProblemSpec spec = s.spec("zero", {2.0});
        const auto z = normals(3, 2);
        const Sensitivities sens = forward_sensitivities(spec, s.coeffs, 3, s.sgrid, z);
        const PathSolution x = solve_truncated(spec, s.coeffs, 3, s.sgrid, z);
        for (std::size_t n = 0; n <= 8; ++n) {
            for (std::size_t k = 0; k < 3; ++k) {
                CHECK(std::abs(sens(n, 0, k) - s.coeffs->value(0, k, 0, n) * x.at(n, 0)) <= 1e-14 * std::abs(x.at(n, 0)));
            }
        }
    }
    SUBCASE("sigma = 0: all zero") {
        Setup s(0.7, 16, 8, 3, {{0.0}});
        const Sensitivities sens = forward_sensitivities(s.spec("sin", {1.0}), s.coeffs, 3, s.sgrid, normals(3, 2));
        for (std::size_t n = 0; n <= 8; ++n) {
            for (std::size_t k = 0; k < 3; ++k) CHECK(sens(n, 0, k) == 0.0);
        }
    }
    SUBCASE("sin drift, N = 8, K = 3 against central differences") {
        Setup s(0.7, 16, 8, 3, {{0.5}});
        const ProblemSpec spec = s.spec("sin", {1.0});
        const auto z = normals(3, 21);
        const Sensitivities sens = forward_sensitivities(spec, s.coeffs, 3, s.sgrid, z);
        double worst = 0.0;
        for (std::size_t n = 1; n <= 8; ++n) {
            for (std::size_t k = 0; k < 3; ++k) {
                auto f = [&](std::span<const double> zz) { return solve_truncated(spec, s.coeffs, 3, s.sgrid, zz).at(n, 0); };
                const double fd = oracle::central_difference(f, z, k, 1e-5);
                worst = std::max(worst, std::abs(fd - sens(n, 0, k)) / std::max(std::abs(sens(n, 0, k)), 1e-3));
            }
        }
        CHECK(worst <= 1e-6);
    }
    SUBCASE("drift without a derivative is refused") {
        Setup s(0.7, 16, 4, 2, {{0.5}});
        ProblemSpec spec = s.spec("sin", {1.0});
        spec.drift.partial = nullptr;
        CHECK_THROWS_AS((void)forward_sensitivities(spec, s.coeffs, 2, s.sgrid, normals(2, 1)), UnsupportedOperation);
    }
}

TEST_CASE("problem validation audits the declared drift constants") {
    Setup s(0.7, 16, 4, 2, {{0.5}});
    ProblemSpec ok = s.spec("tanh", {1.0}, {{"amplitude", 1.5}, {"scale", 2.0}});
    CHECK_NOTHROW(ok.validate());
    ProblemSpec bad_bound = ok;
    bad_bound.drift.bound = 0.5;
    CHECK_THROWS(bad_bound.validate());
    ProblemSpec bad_lipschitz = ok;
    bad_lipschitz.drift.lipschitz = 0.1;
    CHECK_THROWS(bad_lipschitz.validate());
    ProblemSpec shape = ok;
    shape.c = {1.0, 2.0};
    CHECK_THROWS(shape.validate());
}
