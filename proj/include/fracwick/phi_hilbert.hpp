// SPDX-License-Identifier: MIT
#pragma once

// Exact arithmetic in the Hilbert space H_phi of the fractional kernel
// phi(s,t) = H(2H-1)|s-t|^(2H-2), restricted to piecewise-constant
// functions so that every inner product has a closed form.

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fracwick {

/// Hurst exponent, strictly inside (1/2, 1).
class Hurst {
public:
    explicit Hurst(double h);
    double value() const noexcept { return h_; }
    /// 2H, the exponent of the fBm covariance.
    double two_h() const noexcept { return 2.0 * h_; }

private:
    double h_;
};

/// Partition 0 = tau_0 < tau_1 < ... < tau_M = T of the time horizon.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points);
    static TimeGrid uniform(double horizon, std::size_t cells);

    std::size_t cells() const noexcept { return points_.size() - 1; }
    double horizon() const noexcept { return points_.back(); }
    double point(std::size_t n) const { return points_.at(n); }
    std::span<const double> points() const noexcept { return points_; }

    /// Index n with tau_n == t up to `tol`, if t is a grid point.
    std::optional<std::size_t> index_of(double t, double tol = 1e-12) const;
    /// Same as index_of but throws std::invalid_argument when t is off-grid.
    std::size_t require_index(double t) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> points_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

GridPtr make_uniform_grid(double horizon, std::size_t cells);

/// Piecewise-constant function; values()[m] holds the value on
/// [tau_m, tau_{m+1}).
class StepFunction {
public:
    StepFunction(GridPtr grid, std::vector<double> values);

    static StepFunction zero(GridPtr grid);
    static StepFunction constant(GridPtr grid, double value);
    /// chi_[tau_first, tau_last) as a function of cell indices.
    static StepFunction cells(GridPtr grid, std::size_t first, std::size_t last);
    /// chi_[a, b] for grid points a <= b.
    static StepFunction indicator(GridPtr grid, double a, double b);

    const TimeGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    Eigen::Map<const Eigen::VectorXd> vector() const noexcept;
    std::size_t size() const noexcept { return values_.size(); }

    /// Pointwise product, e.g. chi_[r,t] * sigma.
    StepFunction operator*(const StepFunction& other) const;
    StepFunction operator*(double scale) const;
    StepFunction operator+(const StepFunction& other) const;
    StepFunction operator-(const StepFunction& other) const;

    /// Restriction to [a, b] (grid points): chi_[a,b] * f.
    StepFunction restrict_to(double a, double b) const;

    bool same_grid(const StepFunction& other) const noexcept;

private:
    GridPtr grid_;
    std::vector<double> values_;
};

/// phi(s,t) = H(2H-1)|s-t|^(2H-2). Throws DiagonalSingularity when s == t.
double phi_kernel(double s, double t, Hurst h);

/// <chi_[a,b], chi_[c,d]>_phi in closed form:
/// (|b-c|^2H + |a-d|^2H - |a-c|^2H - |b-d|^2H) / 2.
double rect_inner(double a, double b, double c, double d, Hurst h);

/// Cell-by-cell Gram matrix of the phi inner product on one grid.
class PhiGram {
public:
    PhiGram(GridPtr grid, Hurst hurst);

    const TimeGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    Hurst hurst() const noexcept { return hurst_; }
    const Eigen::MatrixXd& entries() const noexcept { return entries_; }
    double operator()(std::size_t m, std::size_t n) const { return entries_(m, n); }

    /// <f, g>_phi = f^T G g. Throws GridMismatch when grids differ.
    double inner(const StepFunction& f, const StepFunction& g) const;
    double norm_sq(const StepFunction& f) const { return inner(f, f); }
    /// G f, i.e. the vector of <f, chi_cell_m>_phi.
    Eigen::VectorXd apply(const StepFunction& f) const;

    void check_grid(const StepFunction& f) const;

private:
    GridPtr grid_;
    Hurst hurst_;
    Eigen::MatrixXd entries_;
};

/// Free-function form of PhiGram::inner.
double inner_phi(const StepFunction& f, const StepFunction& g, const PhiGram& gram);

/// Phi[f](t) = int_0^T f(s) phi(t,s) ds, summed cell by cell in closed form.
/// Finite at cell endpoints.
double phi_transform(const StepFunction& f, double t, Hurst h);

enum class SeedFamily {
    legendre,   ///< shifted Legendre polynomials sampled at cell midpoints
    indicator,  ///< single grid cells in time order
    dyadic,     ///< Haar-ordered indicators of a uniform coarse partition
};

SeedFamily parse_seed_family(const std::string& name);
std::string to_string(SeedFamily family);

/// Build `count` seeds on `grid`. `dyadic_cells` is the number of coarse
/// cells for SeedFamily::dyadic (must divide the grid cell count); ignored
/// otherwise.
std::vector<StepFunction> make_seed_family(SeedFamily family, const GridPtr& grid,
                                           std::size_t count, std::size_t dyadic_cells = 0);

/// Orthonormal system e_1..e_K together with the Cameron-Martin table
/// cm(k, n) = <e_k, chi_[0, tau_n]>_phi.
class PhiBasis {
public:
    PhiBasis(std::shared_ptr<const PhiGram> gram, std::vector<StepFunction> vectors);

    std::size_t size() const noexcept { return vectors_.size(); }
    const StepFunction& vector(std::size_t k) const { return vectors_.at(k); }
    const std::vector<StepFunction>& vectors() const noexcept { return vectors_; }
    const PhiGram& gram() const noexcept { return *gram_; }
    const std::shared_ptr<const PhiGram>& gram_ptr() const noexcept { return gram_; }
    const TimeGrid& grid() const noexcept { return gram_->grid(); }
    Hurst hurst() const noexcept { return gram_->hurst(); }

    /// K x (M+1) table; column n is the prefix indicator chi_[0, tau_n].
    const Eigen::MatrixXd& cm_table() const noexcept { return cm_; }
    double cm(std::size_t k, std::size_t n) const { return cm_(k, n); }

    /// max |<e_j, e_k>_phi - delta_jk|.
    double orthonormality_defect() const;

    /// First k vectors as a new basis.
    PhiBasis truncated(std::size_t k) const;

private:
    std::shared_ptr<const PhiGram> gram_;
    std::vector<StepFunction> vectors_;
    Eigen::MatrixXd cm_;
};

/// Modified Gram-Schmidt under <.,.>_phi with one full reorthogonalization
/// pass. Throws DegenerateFamily when a pivot norm drops below 1e-12 times
/// the norm of the seed that produced it.
PhiBasis gram_schmidt(std::shared_ptr<const PhiGram> gram,
                      std::span<const StepFunction> seeds, std::size_t k);

inline constexpr double kOrthonormalityTolerance = 1e-10;
inline constexpr double kPivotCutoff = 1e-12;

/// CSV with columns k, cell, value (one row per basis entry).
void write_basis_csv(std::ostream& out, const PhiBasis& basis);
PhiBasis read_basis_csv(std::istream& in, std::shared_ptr<const PhiGram> gram);

}  // namespace fracwick
