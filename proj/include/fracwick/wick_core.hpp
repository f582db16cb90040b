// SPDX-License-Identifier: MIT
#pragma once

#include "fracwick/phi_hilbert.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace fracwick {

/// Sigma_{i,k}(r,t) = <chi_[r,t] sigma_i, e_k>_phi on a set of nodes of the
/// basis grid. Stored as cumulative values from 0 and differenced on demand,
/// which makes additivity over adjacent intervals exact.
class SigmaCoeffs {
public:
    SigmaCoeffs(PhiBasis basis, std::vector<StepFunction> sigma, const TimeGrid& nodes);

    const PhiBasis& basis() const noexcept { return basis_; }
    std::size_t components() const noexcept { return sigma_.size(); }
    std::size_t basis_size() const noexcept { return basis_.size(); }
    std::size_t nodes() const noexcept { return node_index_.size(); }
    const StepFunction& sigma(std::size_t i) const { return sigma_.at(i); }
    /// Index into the basis grid of node n.
    std::size_t grid_index(std::size_t n) const { return node_index_.at(n); }

    /// K x nodes table of <chi_[0, t_n] sigma_i, e_k>_phi.
    const Eigen::MatrixXd& cumulative(std::size_t i) const { return cumulative_.at(i); }

    /// Sigma_{i,k}(t_r, t_t) for node indices r <= t.
    double value(std::size_t i, std::size_t k, std::size_t r, std::size_t t) const;
    /// (Sigma_{i,0..K-1}(t_r, t_t)).
    std::vector<double> shifts(std::size_t i, std::size_t r, std::size_t t, std::size_t k) const;

    /// sigma_i^K(r,t; .) = sum_k Sigma_{i,k}(r,t) e_k.
    StepFunction projection(std::size_t i, std::size_t r, std::size_t t, std::size_t k) const;

private:
    PhiBasis basis_;
    std::vector<StepFunction> sigma_;
    std::vector<std::size_t> node_index_;
    std::vector<Eigen::MatrixXd> cumulative_;
};

SigmaCoeffs sigma_coeffs(const PhiBasis& basis, std::span<const StepFunction> sigma,
                         const TimeGrid& nodes);

/// |sigma_i^K(r,t;.)|_phi^2 = sum_{k<K} Sigma_{i,k}(r,t)^2 (Parseval on the span).
double projection_norm_sq(const SigmaCoeffs& coeffs, std::size_t i, std::size_t r, std::size_t t,
                          std::size_t k);

/// Stochastic exponential evaluated in the log domain; value may be +inf on
/// overflow and is never clamped.
struct WickExponentialEval {
    double log_value = 0.0;
    double value = 1.0;

    static WickExponentialEval from_log(double log_value) noexcept;
};

/// exp{ sum_k z_k shifts_k - norm_sq / 2 }.
WickExponentialEval wick_exponential(std::span<const double> z, std::span<const double> shifts,
                                     double norm_sq);

/// Offset applied to the realized Gaussian I(g) under the translation
/// T_{-Phi[f]}: I(g) -> I(g) - <g, f>_phi. Returns -<g, f>_phi.
double translation_shift(const StepFunction& g, const StepFunction& f, const PhiGram& gram);

/// Q(x, y) = <chi_[0,t_x] sigma, chi_[0,t_y] sigma>_phi over the nodes, exact.
Eigen::MatrixXd exact_prefix_gram(const PhiGram& gram, const StepFunction& sigma,
                                  std::span<const std::size_t> node_index);

/// Q^K(x, y) = <sigma^K(0,t_x), sigma^K(0,t_y)>_phi from the first K basis vectors.
Eigen::MatrixXd truncated_prefix_gram(const SigmaCoeffs& coeffs, std::size_t i, std::size_t k);

}  // namespace fracwick
