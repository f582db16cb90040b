// SPDX-License-Identifier: MIT
#pragma once

#include "fracwick/phi_hilbert.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace fracwick {

/// SplitMix64 keyed by (seed, stream): each draw index owns an independent,
/// replayable stream, so batch content does not depend on how draws are
/// distributed over workers.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

    result_type operator()() noexcept;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

private:
    std::uint64_t state_;
};

/// Jointly Gaussian Wiener integrals I_i(kernel): component i owns an ordered
/// kernel list. Different components are independent fBm's.
struct GaussianFrame {
    std::vector<std::vector<StepFunction>> components;

    std::size_t dimension() const noexcept;
    /// Position of component i's first kernel in a sampled vector.
    std::size_t offset(std::size_t component) const;
};

/// Block-diagonal covariance Cov(I(f), I(g)) = <f, g>_phi and its lower
/// Cholesky factor.
class CovarianceModel {
public:
    CovarianceModel(std::vector<Eigen::MatrixXd> blocks, std::vector<Eigen::MatrixXd> factors,
                    double jitter_used);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    const Eigen::MatrixXd& block(std::size_t i) const { return blocks_.at(i); }
    const Eigen::MatrixXd& block_factor(std::size_t i) const { return factors_.at(i); }
    double jitter_used() const noexcept { return jitter_; }

    /// Dense assembled matrix and factor (diagnostics and tests).
    Eigen::MatrixXd matrix() const;
    Eigen::MatrixXd factor() const;

    /// One draw: factor * xi with xi standard normal from CounterRng(seed, index).
    void draw(std::uint64_t seed, std::uint64_t index, std::span<double> out) const;

private:
    std::vector<Eigen::MatrixXd> blocks_;
    std::vector<Eigen::MatrixXd> factors_;
    double jitter_;
    std::size_t dimension_ = 0;
};

/// Jitter ladder tried in order; the first successful factorization wins.
inline constexpr double kJitterLadder[] = {0.0, 1e-12, 1e-10, 1e-8};
/// Residual pivots within this fraction of the largest diagonal entry are
/// exact linear dependencies and get a zero column.
inline constexpr double kDependentPivot = 1e-12;

/// Factor a symmetric PSD matrix as L L^T (L lower triangular), zeroing
/// dependent columns. Returns false on a clearly negative pivot.
bool semidefinite_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l);

CovarianceModel build_covariance(const GaussianFrame& frame, const PhiGram& gram);

struct SampleBatch {
    std::uint64_t seed = 0;
    std::size_t count = 0;
    std::size_t dimension = 0;
    std::vector<double> draws;  ///< row-major count x dimension

    std::span<const double> draw(std::size_t j) const {
        return std::span<const double>(draws).subspan(j * dimension, dimension);
    }
};

/// n draws, deterministic in (model, n, seed). `workers` splits the index
/// range; the result is identical for every worker count.
SampleBatch sample(const CovarianceModel& model, std::size_t n, std::uint64_t seed,
                   unsigned workers = 1);

/// Cov(B^K(t), B^K(s)) = sum_{k<K} cm(k,s) cm(k,t) for grid points s, t.
double cm_partial_sum_covariance(const PhiBasis& basis, double s, double t, std::size_t k);

/// Exact fBm covariance (t^2H + s^2H - |t-s|^2H) / 2.
double fbm_covariance(double s, double t, Hurst h);

}  // namespace fracwick
