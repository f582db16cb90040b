// SPDX-License-Identifier: MIT
#pragma once

// Pathwise evaluation of the mild solution of the Wick-type Wong-Zakai
// system and of the exact Ito solution written in the same integral form
//
//   X_i(t) = c_i E_i(0,t) + int_0^t T_{-Phi[k_i(s,t)]} b_i(s, X(s)) E_i(s,t) ds,
//
// where k_i(s,t) is either the projection sigma_i^K(s,t;.) (truncated
// solver) or chi_[s,t] sigma_i (reference solver). The ds integral is a
// left-endpoint Riemann sum on a uniform grid; nested translations are
// tracked by ShiftDescriptor and memoized.

#include "fracwick/drift.hpp"
#include "fracwick/gaussian_ensemble.hpp"
#include "fracwick/phi_hilbert.hpp"
#include "fracwick/wick_core.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace fracwick {

struct ProblemSpec {
    Drift drift;
    std::vector<StepFunction> sigma;  ///< one per component, on the basis grid
    std::vector<double> c;            ///< initial condition
    Hurst hurst{0.75};
    double horizon = 1.0;

    std::size_t dimension() const noexcept { return c.size(); }
    /// S = max_i sup_t |sigma_i(t)|.
    double sigma_bound() const;
    /// Shape checks plus random spot checks of the declared drift bound and
    /// Lipschitz constant. Throws std::invalid_argument on violation.
    void validate(std::uint64_t audit_seed = 0x5eed) const;
};

/// Uniform nodes t_n = n * t_end / N, n = 0..N.
class SolverGrid {
public:
    SolverGrid(double t_end, std::size_t steps);

    std::size_t steps() const noexcept { return steps_; }
    double end() const noexcept { return nodes_.horizon(); }
    double delta() const noexcept { return end() / static_cast<double>(steps_); }
    double node(std::size_t n) const { return nodes_.point(n); }
    const TimeGrid& nodes() const noexcept { return nodes_; }

private:
    std::size_t steps_;
    TimeGrid nodes_;
};

struct SolverOptions {
    /// Coupled drift with d >= 2 is refused above this many steps.
    std::size_t max_coupled_steps = 16;
    /// Use the descriptor-memo recursion even where the triangular fast
    /// path applies (testing).
    bool force_general = false;
};

/// Canonical chain of node intervals per component. Zero-length intervals
/// are dropped, segments are sorted and adjacent same-component segments
/// are merged.
class ShiftDescriptor {
public:
    struct Segment {
        std::size_t component;
        std::size_t begin;
        std::size_t end;
        friend bool operator==(const Segment&, const Segment&) = default;
    };

    ShiftDescriptor() = default;
    static ShiftDescriptor from_segments(std::vector<Segment> segments);

    /// D (+) [begin, end]@component.
    ShiftDescriptor appended(std::size_t component, std::size_t begin, std::size_t end) const;

    std::span<const Segment> segments() const noexcept { return segments_; }
    std::size_t depth() const noexcept { return segments_.size(); }
    bool empty() const noexcept { return segments_.empty(); }

    friend bool operator==(const ShiftDescriptor&, const ShiftDescriptor&) = default;

private:
    std::vector<Segment> segments_;
};

/// Deterministic half of a model: per component the prefix Gram
/// Q_i(x, y) = <k_i(0,t_x), k_i(0,t_y)>_phi over solver nodes.
class KernelGeometry {
public:
    explicit KernelGeometry(std::vector<Eigen::MatrixXd> prefix);

    std::size_t components() const noexcept { return prefix_.size(); }
    std::size_t nodes() const noexcept { return nodes_; }
    const Eigen::MatrixXd& prefix(std::size_t i) const { return prefix_.at(i); }

    /// <k_i(t_r, t_t), k_i(t_a, t_b)>_phi.
    double inner(std::size_t i, std::size_t r, std::size_t t, std::size_t a, std::size_t b) const;
    double variance(std::size_t i, std::size_t r, std::size_t t) const { return inner(i, r, t, r, t); }

private:
    std::vector<Eigen::MatrixXd> prefix_;
    std::size_t nodes_ = 0;
};

/// Per-sample realized Gaussians l_i(x) = I_i(k_i(0, t_x)), one vector of
/// N+1 node values per component.
using Levels = std::vector<Eigen::VectorXd>;

struct SolverDiagnostics {
    std::size_t memo_size = 0;
    std::size_t max_chain_depth = 0;
    double max_abs_drift = 0.0;
    bool fast_path = false;
};

struct PathSolution {
    Eigen::MatrixXd values;  ///< (N+1) x d, row n holds X(t_n)
    SolverDiagnostics diagnostics;

    double at(std::size_t n, std::size_t i) const {
        return values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i));
    }
};

/// dX_i(t_n) / d theta_{i,k} with theta the Gaussian coordinates of
/// component i.
class Sensitivities {
public:
    Sensitivities(std::size_t nodes, std::size_t components, std::size_t params);

    double operator()(std::size_t n, std::size_t i, std::size_t k) const { return data_[index(n, i, k)]; }
    double& operator()(std::size_t n, std::size_t i, std::size_t k) { return data_[index(n, i, k)]; }
    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t components() const noexcept { return components_; }
    std::size_t params() const noexcept { return params_; }

private:
    std::size_t index(std::size_t n, std::size_t i, std::size_t k) const {
        return (n * components_ + i) * params_ + k;
    }
    std::size_t nodes_, components_, params_;
    std::vector<double> data_;
};

/// The memoized mild-representation recursion
///   A_i(t_n; D) = c_i E_i(0,t_n; D) + dt sum_{m<n} b_i(t_m, A(t_m; D (+) [t_m,t_n]@i)) E_i(t_m,t_n; D)
/// with X(t_n) = A(t_n; empty).
class MildEngine {
public:
    MildEngine(ProblemSpec spec, SolverGrid grid, std::shared_ptr<const KernelGeometry> geometry,
               SolverOptions options = {});

    PathSolution solve(const Levels& levels) const;
    /// X(t_node) only; evaluates the nodes reachable from (node, empty).
    Eigen::VectorXd value_at(const Levels& levels, std::size_t node) const;
    /// X_i(t_node) alone; needs the triangular fast path.
    double value_at(const Levels& levels, std::size_t component, std::size_t node) const;
    /// Fast path only: entry (m, p) of table i is A_i(t_m; [t_m, t_p]@i).
    std::vector<Eigen::MatrixXd> shifted_table(const Levels& levels) const;
    /// log E_i(t_r, t_t; D).
    double log_exponential(const Levels& levels, std::size_t i, std::size_t r, std::size_t t,
                           const ShiftDescriptor& shift = {}) const;

    /// Forward derivatives of X with respect to parameters theta where
    /// d l_i(x) / d theta_{i,k} = level_gradient[i](k, x). Requires d = 1 or
    /// decoupled drift, and a differentiable drift.
    Sensitivities sensitivities(const Levels& levels,
                                const std::vector<Eigen::MatrixXd>& level_gradient) const;

    bool uses_fast_path() const noexcept { return fast_; }
    const ProblemSpec& spec() const noexcept { return spec_; }
    const SolverGrid& grid() const noexcept { return grid_; }
    const KernelGeometry& geometry() const noexcept { return *geometry_; }

    /// Upper estimate of memo nodes for the general recursion.
    double estimated_nodes() const;

private:
    struct FastTables;
    class General;

    void check_levels(const Levels& levels) const;
    /// Fills column p of the triangular table for component i (entries
    /// 0..p of `a`) and returns the largest |b| seen.
    double fast_column(std::size_t i, std::size_t p, const Eigen::MatrixXd& w,
                       std::span<double> a, std::span<double> drift_scratch) const;
    Eigen::MatrixXd fast_weights(const Levels& levels, std::size_t i, std::size_t upto) const;
    void audit_drift(double max_abs) const;

    ProblemSpec spec_;
    SolverGrid grid_;
    std::shared_ptr<const KernelGeometry> geometry_;
    SolverOptions options_;
    bool fast_ = false;
    std::shared_ptr<const FastTables> fast_tables_;
};

/// Truncated model at level K: Q^K from the Sigma table, levels
/// l_i(x) = sum_k z_{i,k} <chi_[0,t_x] sigma_i, e_k>_phi.
class TruncatedModel {
public:
    TruncatedModel(std::shared_ptr<const SigmaCoeffs> coeffs, std::size_t k);

    std::size_t k() const noexcept { return k_; }
    const SigmaCoeffs& coeffs() const noexcept { return *coeffs_; }
    const std::shared_ptr<const KernelGeometry>& geometry() const noexcept { return geometry_; }
    /// z laid out component-major: z[i * K + k].
    Levels levels(std::span<const double> z) const;
    /// Per component the K x (N+1) matrix d l_i / d z_{i,k}.
    std::vector<Eigen::MatrixXd> level_gradient() const;

private:
    std::shared_ptr<const SigmaCoeffs> coeffs_;
    std::size_t k_;
    std::shared_ptr<const KernelGeometry> geometry_;
};

/// Exact model: Q from closed-form rectangle integrals, levels built from
/// the realized cell integrals g_{i,m} = I_i(chi_[t_m, t_{m+1}] sigma_i).
class ReferenceModel {
public:
    ReferenceModel(const PhiGram& gram, std::span<const StepFunction> sigma, const SolverGrid& grid);

    const std::shared_ptr<const KernelGeometry>& geometry() const noexcept { return geometry_; }
    /// g laid out component-major: g[i * N + m].
    Levels levels(std::span<const double> g) const;
    std::size_t steps() const noexcept { return steps_; }

private:
    std::size_t steps_;
    std::shared_ptr<const KernelGeometry> geometry_;
};

/// Gaussian frame for common-random-number coupling: component i carries
/// e_1..e_K followed by chi_[t_m, t_{m+1}] sigma_i for every solver cell.
GaussianFrame make_crn_frame(const PhiBasis& basis, std::size_t k, std::span<const StepFunction> sigma,
                             const SolverGrid& grid);

/// Splits one CRN draw into the component-major z (d*K) and g (d*N) vectors.
void split_crn_draw(std::span<const double> draw, std::size_t d, std::size_t k, std::size_t steps,
                    std::span<double> z, std::span<double> g);

PathSolution solve_truncated(const ProblemSpec& spec, std::shared_ptr<const SigmaCoeffs> coeffs,
                             std::size_t k, const SolverGrid& grid, std::span<const double> z,
                             const SolverOptions& options = {});

PathSolution solve_reference(const ProblemSpec& spec, const PhiGram& gram, const SolverGrid& grid,
                             std::span<const double> g, const SolverOptions& options = {});

Sensitivities forward_sensitivities(const ProblemSpec& spec, std::shared_ptr<const SigmaCoeffs> coeffs,
                                    std::size_t k, const SolverGrid& grid, std::span<const double> z);

}  // namespace fracwick
