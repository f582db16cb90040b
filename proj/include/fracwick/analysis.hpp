// SPDX-License-Identifier: MIT
#pragma once

// Monte Carlo verification layer. Every estimator stores per-draw results
// and reduces them in draw order, so reports do not depend on the worker
// count.

#include "fracwick/gaussian_ensemble.hpp"
#include "fracwick/phi_hilbert.hpp"
#include "fracwick/wick_core.hpp"
#include "fracwick/wz_solver.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fracwick {

struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::size_t n = 0;
};

/// Sample mean and standard error (n - 1 normalization), summed in order.
McEstimate mc_estimate(std::span<const double> samples);

/// Everything the estimators share: the problem, the phi geometry, a basis
/// with at least as many vectors as the largest K used, and the solver grid.
struct ModelSetup {
    ProblemSpec spec;
    std::shared_ptr<const PhiGram> gram;
    std::shared_ptr<const PhiBasis> basis;
    SolverGrid grid;

    /// Sigma table of the first k basis vectors on the solver nodes.
    std::shared_ptr<const SigmaCoeffs> coeffs(std::size_t k) const;
};

// ------------------------------------------------------------- convergence

struct ConvergenceRow {
    std::size_t k = 0;
    double l1_error = 0.0;  ///< sum_i E|X_i^K(T) - X_i(T)|
    double std_err = 0.0;
    std::size_t n = 0;
    /// max over node pairs r < t and components of |sigma_i^K(r,t) - chi_[r,t] sigma_i|_phi
    double sigma_defect_phi = 0.0;
};

/// Discrete Gronwall check at one rung and node: the error e(t_n) against
/// M(t_n) + L d dt sum_{m<n} M(t_m) exp(L d (t_n - t_m)), with M the
/// sampled initial-condition plus drift-translation error.
struct GronwallCheck {
    std::size_t k = 0;
    std::size_t node = 0;
    double error = 0.0;
    double m_estimate = 0.0;
    double m_std_err = 0.0;
    double bound = 0.0;
    double slack_std_err = 0.0;  ///< SE of the per-draw difference error - bound
    bool pass = false;
};

struct GronwallRow {
    double t = 0.0;
    double estimate = 0.0;  ///< max over rungs of the sampled M^K(t)
    double envelope = 0.0;
    bool pass = false;
};

struct ConvergenceReport {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t steps = 0;
    std::vector<ConvergenceRow> rows;
    /// SE of the paired difference between consecutive rungs (CRN).
    std::vector<double> step_std_err;
    std::vector<GronwallCheck> gronwall_checks;
    std::vector<GronwallRow> gronwall;

    /// Each rung is at most the previous one plus `n_se` paired SEs.
    bool nonincreasing(double n_se = 2.0) const;
};

/// Requires d = 1 or a decoupled drift. The ladder must be strictly
/// increasing and not exceed the basis size. Gronwall quantities are
/// computed for every node when `with_gronwall` is set.
ConvergenceReport l1_convergence(const ModelSetup& setup, std::span<const std::size_t> ladder, std::size_t n,
                                 std::uint64_t seed, unsigned workers = 1, bool with_gronwall = true);

/// 2 sum_i |c_i| + 2 d M t.
double gronwall_envelope(const ProblemSpec& spec, double t);

// ---------------------------------------------------------- moment bound

struct BoundCheckRecord {
    double p = 1.0, p1 = 2.0, p2 = 2.0;
    std::size_t k = 0;
    std::size_t component = 0;
    double s = 0.0, t = 0.0;
    double lhs = 0.0;     ///< mean of |E_i^K(s,t) - E_i(s,t)|^p
    double lhs_se = 0.0;
    double lhs_ci = 0.0;  ///< lhs + 3 SE
    double c = 0.0;
    double defect = 0.0;  ///< |sigma_i^K(s,t) - chi_[s,t] sigma_i|_phi
    double rhs = 0.0;     ///< c * defect^p
    double ratio = 0.0;   ///< lhs / rhs, 0 when both vanish
    bool pass = false;
};

/// Absolute allowance for floating-point noise when the exact coupling makes
/// both sides of the bound vanish.
inline constexpr double kBoundRoundoff = 1e-12;

/// 2^(3p/2-1) e^(p(p1-1)v/2) Gamma(p2+1)^(p/p2) / sqrt(pi)
///   + 2^(2p-1) S^(2p) T^(2Hp) e^(p(p-1)v/2), with v = |chi_[s,t] sigma|_phi^2.
double appendix_constant(double p, double p1, double p2, double sigma_bound, double horizon, Hurst h,
                         double norm_sq);

/// Throws ConfigError when 1/p1 + 1/p2 != 1/p, p < 1 or p1, p2 <= p.
void check_holder_exponents(double p, double p1, double p2);

/// s < t must be points of the basis grid.
BoundCheckRecord appendix_bound_check(const ModelSetup& setup, std::size_t component, double s, double t, double p,
                                      double p1, double p2, std::size_t k, std::size_t n, std::uint64_t seed,
                                      unsigned workers = 1);

// ---------------------------------------------------------- Fokker-Planck

/// phi(t, x) with the derivatives the weak form needs.
struct TestFunction {
    std::string name;
    std::function<double(double, double)> value, dt, dx, dxx;
};

/// psi((t - t0) / t_width) * psi((x - x0) / x_width), psi(u) = exp(-1/(1-u^2)) on |u| < 1.
TestFunction bump_test_function(std::string name, double t0, double t_width, double x0, double x_width);
TestFunction constant_test_function(std::string name, double value);

struct SteinCheck {
    std::string name;
    double mean = 0.0;  ///< mean of f(Z) Z_k - d_k f(Z)
    double std_err = 0.0;
    bool pass = false;
};

/// Zero-drift check of the binned conditional expectation against
/// Sigma_k(0,r) * (bin mean of X).
struct BinCheck {
    std::size_t node = 0;
    std::size_t k = 0;
    std::size_t bin = 0;
    double estimate = 0.0;
    double closed_form = 0.0;
    double std_err = 0.0;
    bool pass = false;
};

struct FPResidualRecord {
    std::string testfn;
    double residual = 0.0;
    double std_err = 0.0;
    std::size_t bins = 0;
    bool pass = false;
};

struct FokkerPlanckReport {
    std::vector<SteinCheck> stein;
    std::vector<BinCheck> bin_checks;  ///< filled for the zero drift only
    std::vector<FPResidualRecord> residuals;
};

inline constexpr std::size_t kMinSamplesPerBin = 50;

/// d = 1 only. Draws z from the first k basis coordinates, solves X^K with
/// sensitivities, estimates g_k(t_n, .) by `bins` equal-count bins per node
/// and integrates the weak form over the solver grid.
FokkerPlanckReport fokker_planck_residual(const ModelSetup& setup, std::size_t k,
                                          std::span<const TestFunction> tests, std::size_t n, std::size_t bins,
                                          std::uint64_t seed, unsigned workers = 1);

// ------------------------------------------------------- further checks

struct ContinuityRow {
    std::size_t k = 0;
    double mean = 0.0;  ///< E|T_{sigma^K(s,t)} X(s) - T_{chi sigma(s,t)} X(s)| summed over components
    double std_err = 0.0;
};

/// Zero-drift solution X(t_s) = c E(0, t_s) under the two translations
/// along [t_s, t_t]. Node indices refer to the solver grid.
std::vector<ContinuityRow> translation_continuity(const ModelSetup& setup, std::size_t s_node, std::size_t t_node,
                                                  std::span<const std::size_t> ladder, std::size_t n,
                                                  std::uint64_t seed, unsigned workers = 1);

struct LpEnvelopeRecord {
    std::size_t component = 0;
    std::size_t node = 0;
    double p = 1.0;
    double norm = 0.0;  ///< (mean |X_i^K(t)|^p)^(1/p)
    double std_err = 0.0;
    double envelope = 0.0;
    bool pass = false;
};

/// |c_i| exp(p v(0,t)/2) + M t max_s exp(p v(s,t)/2), v = |sigma_i^K(s,t)|_phi^2.
LpEnvelopeRecord lp_envelope_check(const ModelSetup& setup, std::size_t k, std::size_t component,
                                   std::size_t node, double p, std::size_t n, std::uint64_t seed,
                                   unsigned workers = 1);

}  // namespace fracwick
