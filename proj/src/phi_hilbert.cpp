// SPDX-License-Identifier: MIT
#include "fracwick/phi_hilbert.hpp"

#include "fracwick/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <fmt/format.h>

namespace fracwick {

Hurst::Hurst(double h) : h_(h) {
    if (!(h > 0.5 && h < 1.0)) {
        throw std::invalid_argument(fmt::format("Hurst exponent must lie in (1/2, 1), got {}", h));
    }
}

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("TimeGrid needs at least one cell");
    if (points_.front() != 0.0) throw std::invalid_argument("TimeGrid must start at 0");
    for (std::size_t n = 1; n < points_.size(); ++n) {
        if (!(points_[n] > points_[n - 1]) || !std::isfinite(points_[n])) {
            throw std::invalid_argument("TimeGrid points must be finite and strictly increasing");
        }
    }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t cells) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (cells == 0) throw std::invalid_argument("uniform grid needs at least one cell");
    std::vector<double> pts(cells + 1);
    for (std::size_t n = 0; n <= cells; ++n) {
        pts[n] = horizon * static_cast<double>(n) / static_cast<double>(cells);
    }
    pts.back() = horizon;
    return TimeGrid(std::move(pts));
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), t - tol);
    if (it != points_.end() && std::abs(*it - t) <= tol) {
        return static_cast<std::size_t>(it - points_.begin());
    }
    return std::nullopt;
}

std::size_t TimeGrid::require_index(double t) const {
    auto idx = index_of(t, 1e-12 * std::max(1.0, horizon()));
    if (!idx) throw std::invalid_argument(fmt::format("time {} is not a grid point", t));
    return *idx;
}

GridPtr make_uniform_grid(double horizon, std::size_t cells) {
    return std::make_shared<const TimeGrid>(TimeGrid::uniform(horizon, cells));
}

// --- StepFunction ---------------------------------------------------------

StepFunction::StepFunction(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw std::invalid_argument("StepFunction requires a grid");
    if (values_.size() != grid_->cells()) {
        throw std::invalid_argument(fmt::format("StepFunction has {} values for {} cells",
                                                values_.size(), grid_->cells()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw std::invalid_argument("StepFunction values must be finite");
    }
}

StepFunction StepFunction::zero(GridPtr grid) { return constant(std::move(grid), 0.0); }

StepFunction StepFunction::constant(GridPtr grid, double value) {
    const std::size_t m = grid->cells();
    return StepFunction(std::move(grid), std::vector<double>(m, value));
}

StepFunction StepFunction::cells(GridPtr grid, std::size_t first, std::size_t last) {
    if (first > last || last > grid->cells()) throw std::out_of_range("cell range out of grid");
    std::vector<double> v(grid->cells(), 0.0);
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(first),
              v.begin() + static_cast<std::ptrdiff_t>(last), 1.0);
    return StepFunction(std::move(grid), std::move(v));
}

StepFunction StepFunction::indicator(GridPtr grid, double a, double b) {
    const std::size_t ia = grid->require_index(a);
    const std::size_t ib = grid->require_index(b);
    if (ia > ib) throw std::invalid_argument("indicator needs a <= b");
    return cells(std::move(grid), ia, ib);
}

Eigen::Map<const Eigen::VectorXd> StepFunction::vector() const noexcept {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
}

bool StepFunction::same_grid(const StepFunction& other) const noexcept {
    return grid_ == other.grid_ || *grid_ == *other.grid_;
}

namespace {

template <typename Op>
StepFunction combine(const StepFunction& f, const StepFunction& g, Op op) {
    if (!f.same_grid(g)) throw GridMismatch("step functions live on different grids");
    std::vector<double> out(f.size());
    for (std::size_t m = 0; m < out.size(); ++m) out[m] = op(f.values()[m], g.values()[m]);
    return StepFunction(f.grid_ptr(), std::move(out));
}

}  // namespace

StepFunction StepFunction::operator*(const StepFunction& other) const {
    return combine(*this, other, [](double x, double y) { return x * y; });
}

StepFunction StepFunction::operator*(double scale) const {
    std::vector<double> out(values_);
    for (double& v : out) v *= scale;
    return StepFunction(grid_, std::move(out));
}

StepFunction StepFunction::operator+(const StepFunction& other) const {
    return combine(*this, other, [](double x, double y) { return x + y; });
}

StepFunction StepFunction::operator-(const StepFunction& other) const {
    return combine(*this, other, [](double x, double y) { return x - y; });
}

StepFunction StepFunction::restrict_to(double a, double b) const {
    return *this * indicator(grid_, a, b);
}

// --- kernel and closed forms ----------------------------------------------

double phi_kernel(double s, double t, Hurst h) {
    if (s == t) throw DiagonalSingularity("phi kernel is singular on the diagonal s == t");
    const double hv = h.value();
    return hv * (2.0 * hv - 1.0) * std::pow(std::abs(s - t), 2.0 * hv - 2.0);
}

double rect_inner(double a, double b, double c, double d, Hurst h) {
    if (a > b || c > d) throw std::invalid_argument("rect_inner needs a <= b and c <= d");
    const double e = h.two_h();
    auto p = [e](double x) { return std::pow(std::abs(x), e); };
    return 0.5 * (p(b - c) + p(a - d) - p(a - c) - p(b - d));
}

// --- PhiGram ----------------------------------------------------------------

PhiGram::PhiGram(GridPtr grid, Hurst hurst) : grid_(std::move(grid)), hurst_(hurst) {
    const auto pts = grid_->points();
    const std::size_t m = grid_->cells();
    const double e = hurst_.two_h();
    // pw(i, j) = |tau_i - tau_j|^2H
    Eigen::MatrixXd pw(m + 1, m + 1);
    for (std::size_t i = 0; i <= m; ++i) {
        pw(i, i) = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
            pw(i, j) = pw(j, i) = std::pow(pts[i] - pts[j], e);
        }
    }
    entries_.resize(m, m);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            // cell a = [tau_a, tau_{a+1}], cell b = [tau_b, tau_{b+1}]
            const double v =
                0.5 * (pw(a + 1, b) + pw(a, b + 1) - pw(a, b) - pw(a + 1, b + 1));
            entries_(a, b) = entries_(b, a) = v;
        }
    }
}

void PhiGram::check_grid(const StepFunction& f) const {
    if (f.grid_ptr() != grid_ && !(f.grid() == *grid_)) {
        throw GridMismatch("step function grid differs from the Gram grid");
    }
}

double PhiGram::inner(const StepFunction& f, const StepFunction& g) const {
    check_grid(f);
    check_grid(g);
    return f.vector().dot(entries_ * g.vector());
}

Eigen::VectorXd PhiGram::apply(const StepFunction& f) const {
    check_grid(f);
    return entries_ * f.vector();
}

double inner_phi(const StepFunction& f, const StepFunction& g, const PhiGram& gram) {
    if (!f.same_grid(g)) throw GridMismatch("inner_phi: step functions live on different grids");
    return gram.inner(f, g);
}

double phi_transform(const StepFunction& f, double t, Hurst h) {
    const double hv = h.value();
    const double e = 2.0 * hv - 1.0;
    auto term = [e](double x) {
        if (x == 0.0) return 0.0;
        return (x > 0.0 ? 1.0 : -1.0) * std::pow(std::abs(x), e);
    };
    const auto pts = f.grid().points();
    double acc = 0.0;
    for (std::size_t m = 0; m < f.size(); ++m) {
        const double v = f.values()[m];
        if (v == 0.0) continue;
        acc += v * (term(t - pts[m]) - term(t - pts[m + 1]));
    }
    return hv * acc;
}

// --- seed families ------------------------------------------------------------

SeedFamily parse_seed_family(const std::string& name) {
    if (name == "legendre") return SeedFamily::legendre;
    if (name == "indicator") return SeedFamily::indicator;
    if (name == "dyadic") return SeedFamily::dyadic;
    throw std::invalid_argument("unknown seed family '" + name + "'");
}

std::string to_string(SeedFamily family) {
    switch (family) {
        case SeedFamily::legendre: return "legendre";
        case SeedFamily::indicator: return "indicator";
        case SeedFamily::dyadic: return "dyadic";
    }
    return "?";
}

namespace {

std::vector<StepFunction> legendre_seeds(const GridPtr& grid, std::size_t count) {
    const auto pts = grid->points();
    const std::size_t m = grid->cells();
    const double horizon = grid->horizon();
    std::vector<std::vector<double>> vals(count, std::vector<double>(m));
    for (std::size_t c = 0; c < m; ++c) {
        const double x = (pts[c] + pts[c + 1]) / horizon - 1.0;  // midpoint mapped to [-1,1]
        double p_prev = 1.0;
        double p = x;
        for (std::size_t k = 0; k < count; ++k) {
            if (k == 0) {
                vals[k][c] = 1.0;
            } else if (k == 1) {
                vals[k][c] = x;
            } else {
                const double kk = static_cast<double>(k);
                const double next = ((2.0 * kk - 1.0) * x * p - (kk - 1.0) * p_prev) / kk;
                p_prev = p;
                p = next;
                vals[k][c] = p;
            }
        }
    }
    std::vector<StepFunction> out;
    out.reserve(count);
    for (auto& v : vals) out.emplace_back(grid, std::move(v));
    return out;
}

std::vector<StepFunction> dyadic_seeds(const GridPtr& grid, std::size_t count,
                                       std::size_t coarse) {
    const std::size_t m = grid->cells();
    if (coarse == 0 || m % coarse != 0) {
        throw std::invalid_argument(
            fmt::format("dyadic seeds need a coarse cell count dividing {}, got {}", m, coarse));
    }
    const std::size_t width = m / coarse;
    // Breadth-first bisection of [0, coarse): the whole range, then the left
    // half of every range at each level. The first 2^j seeds span the step
    // functions on the 2^j-cell partition when coarse is a power of two.
    std::vector<StepFunction> out;
    out.push_back(StepFunction::cells(grid, 0, m));
    std::vector<std::pair<std::size_t, std::size_t>> level{{0, coarse}};
    while (out.size() < count) {
        std::vector<std::pair<std::size_t, std::size_t>> next;
        bool split = false;
        for (auto [lo, hi] : level) {
            if (hi - lo < 2) {
                next.emplace_back(lo, hi);
                continue;
            }
            const std::size_t mid = lo + (hi - lo) / 2;
            if (out.size() < count) out.push_back(StepFunction::cells(grid, lo * width, mid * width));
            next.emplace_back(lo, mid);
            next.emplace_back(mid, hi);
            split = true;
        }
        if (!split) break;
        level = std::move(next);
    }
    if (out.size() < count) {
        throw std::invalid_argument(
            fmt::format("dyadic family on {} coarse cells has only {} members", coarse, out.size()));
    }
    return out;
}

}  // namespace

std::vector<StepFunction> make_seed_family(SeedFamily family, const GridPtr& grid,
                                           std::size_t count, std::size_t dyadic_cells) {
    switch (family) {
        case SeedFamily::legendre: return legendre_seeds(grid, count);
        case SeedFamily::indicator: {
            if (count > grid->cells()) throw std::invalid_argument("more indicator seeds than cells");
            std::vector<StepFunction> out;
            for (std::size_t c = 0; c < count; ++c) out.push_back(StepFunction::cells(grid, c, c + 1));
            return out;
        }
        case SeedFamily::dyadic:
            return dyadic_seeds(grid, count, dyadic_cells == 0 ? count : dyadic_cells);
    }
    throw std::invalid_argument("unknown seed family");
}

// --- PhiBasis -----------------------------------------------------------------

PhiBasis::PhiBasis(std::shared_ptr<const PhiGram> gram, std::vector<StepFunction> vectors)
    : gram_(std::move(gram)), vectors_(std::move(vectors)) {
    const std::size_t m = gram_->grid().cells();
    cm_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vectors_.size()),
                                static_cast<Eigen::Index>(m + 1));
    for (std::size_t k = 0; k < vectors_.size(); ++k) {
        const Eigen::VectorXd ge = gram_->apply(vectors_[k]);
        double acc = 0.0;
        for (std::size_t n = 0; n < m; ++n) {
            acc += ge(static_cast<Eigen::Index>(n));
            cm_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n + 1)) = acc;
        }
    }
}

double PhiBasis::orthonormality_defect() const {
    const auto k = static_cast<Eigen::Index>(vectors_.size());
    if (k == 0) return 0.0;
    Eigen::MatrixXd e(gram_->grid().cells(), k);
    for (Eigen::Index j = 0; j < k; ++j) e.col(j) = vectors_[static_cast<std::size_t>(j)].vector();
    const Eigen::MatrixXd g = e.transpose() * gram_->entries() * e;
    return (g - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
}

PhiBasis PhiBasis::truncated(std::size_t k) const {
    if (k > vectors_.size()) throw std::out_of_range("truncation beyond basis size");
    return PhiBasis(gram_, std::vector<StepFunction>(vectors_.begin(),
                                                     vectors_.begin() + static_cast<std::ptrdiff_t>(k)));
}

PhiBasis gram_schmidt(std::shared_ptr<const PhiGram> gram, std::span<const StepFunction> seeds,
                      std::size_t k) {
    if (k > seeds.size()) {
        throw std::invalid_argument(fmt::format("requested {} vectors from {} seeds", k, seeds.size()));
    }
    const Eigen::MatrixXd& g = gram->entries();
    std::vector<Eigen::VectorXd> basis;
    std::vector<Eigen::VectorXd> g_basis;  // G e_i, so <e_i, v> is a dot product
    basis.reserve(k);
    g_basis.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        gram->check_grid(seeds[j]);
        Eigen::VectorXd v = seeds[j].vector();
        const double seed_norm = std::sqrt(std::max(0.0, v.dot(g * v)));
        if (seed_norm == 0.0) {
            throw DegenerateFamily(j, fmt::format("seed {} has zero phi-norm", j));
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < basis.size(); ++i) v -= g_basis[i].dot(v) * basis[i];
        }
        const Eigen::VectorXd gv = g * v;
        const double norm = std::sqrt(std::max(0.0, v.dot(gv)));
        if (norm < kPivotCutoff * seed_norm) {
            throw DegenerateFamily(
                j, fmt::format("seed family is rank deficient at index {} (pivot {:.3e} of {:.3e})", j,
                               norm, seed_norm));
        }
        basis.push_back(v / norm);
        g_basis.push_back(gv / norm);
    }
    std::vector<StepFunction> out;
    out.reserve(k);
    for (auto& v : basis) out.emplace_back(gram->grid_ptr(), std::vector<double>(v.data(), v.data() + v.size()));
    PhiBasis result(std::move(gram), std::move(out));
    const double defect = result.orthonormality_defect();
    if (defect > kOrthonormalityTolerance) {
        throw DegenerateFamily(k, fmt::format("orthonormality defect {:.3e} exceeds {:.0e}", defect,
                                              kOrthonormalityTolerance));
    }
    return result;
}

void write_basis_csv(std::ostream& out, const PhiBasis& basis) {
    out << "k,cell,value\n";
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const auto v = basis.vector(k).values();
        for (std::size_t c = 0; c < v.size(); ++c) {
            out << fmt::format("{},{},{:.17g}\n", k + 1, c, v[c]);
        }
    }
}

PhiBasis read_basis_csv(std::istream& in, std::shared_ptr<const PhiGram> gram) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("k,cell,value", 0) != 0) {
        throw std::runtime_error("basis CSV: missing 'k,cell,value' header");
    }
    const std::size_t m = gram->grid().cells();
    std::map<std::size_t, std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
            throw std::runtime_error("basis CSV: malformed row '" + line + "'");
        }
        const std::size_t k = std::stoul(a);
        const std::size_t cell = std::stoul(b);
        if (k == 0 || cell >= m) throw std::runtime_error("basis CSV: index out of range");
        auto& v = rows[k];
        if (v.empty()) v.assign(m, 0.0);
        v[cell] = std::stod(c);
    }
    std::vector<StepFunction> vectors;
    std::size_t expected = 1;
    for (auto& [k, v] : rows) {
        if (k != expected++) throw std::runtime_error("basis CSV: vector indices are not contiguous");
        vectors.emplace_back(gram->grid_ptr(), std::move(v));
    }
    return PhiBasis(std::move(gram), std::move(vectors));
}

}  // namespace fracwick
