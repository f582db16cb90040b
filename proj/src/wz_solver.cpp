// SPDX-License-Identifier: MIT
#include "fracwick/wz_solver.hpp"

#include "fracwick/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <utility>

namespace fracwick {

namespace {

inline Eigen::Index ix(std::size_t n) { return static_cast<Eigen::Index>(n); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------- ProblemSpec

double ProblemSpec::sigma_bound() const {
    double s = 0.0;
    for (const auto& f : sigma) {
        for (double v : f.values()) s = std::max(s, std::abs(v));
    }
    return s;
}

void ProblemSpec::validate(std::uint64_t audit_seed) const {
    const std::size_t d = dimension();
    if (d == 0) throw std::invalid_argument("initial condition is empty");
    if (sigma.size() != d) {
        throw std::invalid_argument(fmt::format("{} diffusion coefficients for dimension {}", sigma.size(), d));
    }
    for (double ci : c) {
        if (!std::isfinite(ci)) throw std::invalid_argument("initial condition is not finite");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
    for (const auto& s : sigma) {
        if (!s.same_grid(sigma.front())) throw GridMismatch("diffusion coefficients live on different grids");
        if (std::abs(s.grid().horizon() - horizon) > 1e-12 * horizon) {
            throw std::invalid_argument("diffusion grid does not end at the horizon");
        }
        for (double v : s.values()) {
            if (!std::isfinite(v)) throw std::invalid_argument("diffusion coefficient is not finite");
        }
    }
    if (!drift.value) throw std::invalid_argument("drift has no value function");
    if (!(drift.bound >= 0.0) || !(drift.lipschitz >= 0.0)) {
        throw std::invalid_argument("drift bound and Lipschitz constant must be non-negative");
    }

    std::mt19937_64 rng(audit_seed);
    std::uniform_real_distribution<double> space(-10.0, 10.0);
    std::uniform_real_distribution<double> time(0.0, horizon);
    std::vector<double> x(d), y(d);
    for (int trial = 0; trial < 256; ++trial) {
        const double t = time(rng);
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = space(rng);
            y[j] = x[j] + 0.01 * space(rng);
        }
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) dist += std::abs(x[j] - y[j]);
        for (std::size_t i = 0; i < d; ++i) {
            const double bx = drift.value(i, t, x);
            const double by = drift.value(i, t, y);
            if (std::abs(bx) > drift.bound * (1.0 + 1e-12)) {
                throw std::invalid_argument(
                    fmt::format("drift '{}' exceeds its declared bound {} (|b| = {})", drift.id, drift.bound,
                                std::abs(bx)));
            }
            if (std::abs(bx - by) > drift.lipschitz * dist * (1.0 + 1e-9) + 1e-15) {
                throw std::invalid_argument(
                    fmt::format("drift '{}' violates its declared Lipschitz constant {}", drift.id, drift.lipschitz));
            }
            if (drift.decoupled && d > 1) {
                std::vector<double> other = y;
                other[i] = x[i];
                if (drift.value(i, t, other) != bx) {
                    throw std::invalid_argument(
                        fmt::format("drift '{}' is declared decoupled but b_{} reads other components", drift.id, i));
                }
            }
        }
    }
}

// ----------------------------------------------------------------- SolverGrid

SolverGrid::SolverGrid(double t_end, std::size_t steps) : steps_(steps), nodes_(TimeGrid::uniform(t_end, steps)) {
    if (steps == 0) throw std::invalid_argument("solver grid needs at least one step");
}

// ------------------------------------------------------------ ShiftDescriptor

ShiftDescriptor ShiftDescriptor::from_segments(std::vector<Segment> segments) {
    std::erase_if(segments, [](const Segment& s) { return s.begin == s.end; });
    for (const auto& s : segments) {
        if (s.begin > s.end) throw std::invalid_argument("shift segment with begin > end");
    }
    std::sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
        return std::tie(a.begin, a.end, a.component) < std::tie(b.begin, b.end, b.component);
    });
    ShiftDescriptor out;
    for (const auto& s : segments) {
        if (!out.segments_.empty()) {
            auto& last = out.segments_.back();
            if (last.component == s.component && last.end == s.begin) {
                last.end = s.end;
                continue;
            }
        }
        out.segments_.push_back(s);
    }
    return out;
}

ShiftDescriptor ShiftDescriptor::appended(std::size_t component, std::size_t begin, std::size_t end) const {
    std::vector<Segment> segs = segments_;
    segs.push_back({component, begin, end});
    return from_segments(std::move(segs));
}

// ------------------------------------------------------------- KernelGeometry

KernelGeometry::KernelGeometry(std::vector<Eigen::MatrixXd> prefix) : prefix_(std::move(prefix)) {
    if (prefix_.empty()) throw std::invalid_argument("kernel geometry needs at least one component");
    nodes_ = static_cast<std::size_t>(prefix_.front().rows());
    for (const auto& q : prefix_) {
        if (q.rows() != q.cols() || static_cast<std::size_t>(q.rows()) != nodes_) {
            throw std::invalid_argument("prefix Gram matrices must be square and of equal size");
        }
    }
}

double KernelGeometry::inner(std::size_t i, std::size_t r, std::size_t t, std::size_t a, std::size_t b) const {
    const auto& q = prefix_[i];
    return q(ix(t), ix(b)) - q(ix(t), ix(a)) - q(ix(r), ix(b)) + q(ix(r), ix(a));
}

// -------------------------------------------------------------- Sensitivities

Sensitivities::Sensitivities(std::size_t nodes, std::size_t components, std::size_t params)
    : nodes_(nodes), components_(components), params_(params), data_(nodes * components * params, 0.0) {}

// ----------------------------------------------------------------- MildEngine

// Per component: S(l, m, p) = exp(-<k(l,m), k(m,p)>) for l <= m <= p and
// half variances v(l, m) / 2.
struct MildEngine::FastTables {
    std::size_t n1 = 0;
    std::vector<std::vector<double>> shift;
    std::vector<Eigen::MatrixXd> half_var;

    double s(std::size_t i, std::size_t l, std::size_t m, std::size_t p) const {
        return shift[i][(p * n1 + m) * n1 + l];
    }
};

namespace {

struct KeyHash {
    std::size_t operator()(const std::pair<std::size_t, ShiftDescriptor>& key) const noexcept {
        std::size_t h = std::hash<std::size_t>{}(key.first);
        auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
        for (const auto& s : key.second.segments()) {
            mix(s.component);
            mix(s.begin);
            mix(s.end);
        }
        return h;
    }
};

}  // namespace

class MildEngine::General {
public:
    General(const MildEngine& engine, const Levels& levels) : e_(engine), levels_(levels) {}

    const std::vector<double>& eval(std::size_t m, const ShiftDescriptor& shift) {
        auto key = std::make_pair(m, shift);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;

        const std::size_t d = e_.spec_.dimension();
        if (d == 1 && shift.depth() > 1) throw std::logic_error("single-component shift chain did not merge");
        diag_.max_chain_depth = std::max(diag_.max_chain_depth, shift.depth());

        std::vector<double> out(d);
        const double dt = e_.grid_.delta();
        for (std::size_t i = 0; i < d; ++i) {
            double acc = e_.spec_.c[i] * std::exp(e_.log_exponential(levels_, i, 0, m, shift));
            for (std::size_t l = 0; l < m; ++l) {
                const std::vector<double>& x = eval(l, shift.appended(i, l, m));
                const double b = e_.spec_.drift.value(i, e_.grid_.node(l), x);
                diag_.max_abs_drift = std::max(diag_.max_abs_drift, std::abs(b));
                acc += dt * b * std::exp(e_.log_exponential(levels_, i, l, m, shift));
            }
            out[i] = acc;
        }
        auto [it, inserted] = memo_.emplace(std::move(key), std::move(out));
        return it->second;
    }

    SolverDiagnostics diagnostics() const {
        SolverDiagnostics d = diag_;
        d.memo_size = memo_.size();
        return d;
    }

private:
    const MildEngine& e_;
    const Levels& levels_;
    std::unordered_map<std::pair<std::size_t, ShiftDescriptor>, std::vector<double>, KeyHash> memo_;
    SolverDiagnostics diag_;
};

MildEngine::MildEngine(ProblemSpec spec, SolverGrid grid, std::shared_ptr<const KernelGeometry> geometry,
                       SolverOptions options)
    : spec_(std::move(spec)), grid_(std::move(grid)), geometry_(std::move(geometry)), options_(options) {
    const std::size_t d = spec_.dimension();
    const std::size_t n1 = grid_.steps() + 1;
    if (!geometry_) throw std::invalid_argument("missing kernel geometry");
    if (geometry_->components() != d) {
        throw std::invalid_argument(fmt::format("geometry has {} components, problem has {}", geometry_->components(), d));
    }
    if (geometry_->nodes() != n1) {
        throw std::invalid_argument(fmt::format("geometry has {} nodes, solver grid has {}", geometry_->nodes(), n1));
    }
    if (std::abs(grid_.end() - spec_.horizon) > 1e-12 * spec_.horizon) {
        throw std::invalid_argument("solver grid must end at the horizon");
    }
    if (!spec_.drift.value) throw std::invalid_argument("drift has no value function");

    fast_ = !options_.force_general && (d == 1 || spec_.drift.decoupled);
    if (!fast_ && d > 1 && grid_.steps() > options_.max_coupled_steps) {
        throw ComplexityGuard(estimated_nodes(),
                              fmt::format("coupled recursion with d = {} and N = {} exceeds N_max = {} "
                                          "(about {:.3g} memo nodes)",
                                          d, grid_.steps(), options_.max_coupled_steps, estimated_nodes()));
    }

    if (fast_) {
        auto tables = std::make_shared<FastTables>();
        tables->n1 = n1;
        for (std::size_t i = 0; i < d; ++i) {
            std::vector<double> s(n1 * n1 * n1, 0.0);
            Eigen::MatrixXd hv = Eigen::MatrixXd::Zero(ix(n1), ix(n1));
            for (std::size_t p = 0; p < n1; ++p) {
                for (std::size_t m = 0; m <= p; ++m) {
                    for (std::size_t l = 0; l <= m; ++l) {
                        s[(p * n1 + m) * n1 + l] = m == p ? 1.0 : std::exp(-geometry_->inner(i, l, m, m, p));
                    }
                }
            }
            for (std::size_t l = 0; l < n1; ++l) {
                for (std::size_t m = l; m < n1; ++m) hv(ix(l), ix(m)) = 0.5 * geometry_->variance(i, l, m);
            }
            tables->shift.push_back(std::move(s));
            tables->half_var.push_back(std::move(hv));
        }
        fast_tables_ = std::move(tables);
    }
}

double MildEngine::estimated_nodes() const {
    const double n = static_cast<double>(grid_.steps());
    const double d = static_cast<double>(spec_.dimension());
    if (fast_) return d * (n + 1.0) * (n + 2.0) / 2.0;
    double total = 0.0;
    for (std::size_t m = 0; m <= grid_.steps(); ++m) {
        for (std::size_t len = 0; len + m <= grid_.steps(); ++len) total += std::pow(d, static_cast<double>(len));
    }
    return total;
}

void MildEngine::check_levels(const Levels& levels) const {
    if (levels.size() != spec_.dimension()) throw std::invalid_argument("levels do not match the dimension");
    for (const auto& l : levels) {
        if (static_cast<std::size_t>(l.size()) != grid_.steps() + 1) {
            throw std::invalid_argument("levels do not match the solver grid");
        }
    }
}

void MildEngine::audit_drift(double max_abs) const {
    if (max_abs > spec_.drift.bound * (1.0 + 1e-12)) {
        throw Error(fmt::format("drift '{}' returned |b| = {} above its declared bound {}", spec_.drift.id, max_abs,
                                spec_.drift.bound));
    }
}

double MildEngine::log_exponential(const Levels& levels, std::size_t i, std::size_t r, std::size_t t,
                                   const ShiftDescriptor& shift) const {
    const auto& l = levels[i];
    double out = l(ix(t)) - l(ix(r)) - 0.5 * geometry_->variance(i, r, t);
    for (const auto& s : shift.segments()) {
        if (s.component == i) out -= geometry_->inner(i, r, t, s.begin, s.end);
    }
    return out;
}

Eigen::MatrixXd MildEngine::fast_weights(const Levels& levels, std::size_t i, std::size_t upto) const {
    const std::size_t n1 = upto + 1;
    const auto& l = levels[i];
    const auto& hv = fast_tables_->half_var[i];
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ix(n1), ix(n1));
    for (std::size_t a = 0; a < n1; ++a) {
        for (std::size_t b = a; b < n1; ++b) w(ix(a), ix(b)) = std::exp(l(ix(b)) - l(ix(a)) - hv(ix(a), ix(b)));
    }
    return w;
}

double MildEngine::fast_column(std::size_t i, std::size_t p, const Eigen::MatrixXd& w, std::span<double> a,
                               std::span<double> drift_scratch) const {
    const std::size_t d = spec_.dimension();
    const double c = spec_.c[i];
    const double dt = grid_.delta();
    const FastTables& tab = *fast_tables_;
    std::vector<double> x(d, kNaN);
    double max_abs = 0.0;
    for (std::size_t m = 0; m <= p; ++m) {
        double acc = c;
        if (m > 0) {
            acc = c * w(0, ix(m)) * tab.s(i, 0, m, p);
            for (std::size_t l = 0; l < m; ++l) acc += dt * drift_scratch[l] * w(ix(l), ix(m)) * tab.s(i, l, m, p);
        }
        a[m] = acc;
        if (m < p) {
            x[i] = acc;
            const double b = spec_.drift.value(i, grid_.node(m), x);
            drift_scratch[m] = b;
            max_abs = std::max(max_abs, std::abs(b));
        }
    }
    return max_abs;
}

PathSolution MildEngine::solve(const Levels& levels) const {
    check_levels(levels);
    const std::size_t d = spec_.dimension();
    const std::size_t n1 = grid_.steps() + 1;
    PathSolution out;
    out.values.resize(ix(n1), ix(d));
    if (fast_) {
        std::vector<double> a(n1), bs(n1);
        double max_abs = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const Eigen::MatrixXd w = fast_weights(levels, i, grid_.steps());
            for (std::size_t p = 0; p < n1; ++p) {
                max_abs = std::max(max_abs, fast_column(i, p, w, a, bs));
                out.values(ix(p), ix(i)) = a[p];
            }
        }
        out.diagnostics = {d * n1 * (n1 + 1) / 2, 1, max_abs, true};
    } else {
        General g(*this, levels);
        for (std::size_t n = 0; n < n1; ++n) {
            const auto& x = g.eval(n, {});
            for (std::size_t i = 0; i < d; ++i) out.values(ix(n), ix(i)) = x[i];
        }
        out.diagnostics = g.diagnostics();
    }
    audit_drift(out.diagnostics.max_abs_drift);
    return out;
}

Eigen::VectorXd MildEngine::value_at(const Levels& levels, std::size_t node) const {
    check_levels(levels);
    if (node > grid_.steps()) throw std::out_of_range("node beyond the solver grid");
    const std::size_t d = spec_.dimension();
    Eigen::VectorXd out(ix(d));
    if (fast_) {
        std::vector<double> a(node + 1), bs(node + 1);
        double max_abs = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            max_abs = std::max(max_abs, fast_column(i, node, fast_weights(levels, i, node), a, bs));
            out(ix(i)) = a[node];
        }
        audit_drift(max_abs);
    } else {
        General g(*this, levels);
        const auto& x = g.eval(node, {});
        for (std::size_t i = 0; i < d; ++i) out(ix(i)) = x[i];
        audit_drift(g.diagnostics().max_abs_drift);
    }
    return out;
}

double MildEngine::value_at(const Levels& levels, std::size_t component, std::size_t node) const {
    if (!fast_) throw UnsupportedOperation("single-component evaluation needs d = 1 or a decoupled drift");
    check_levels(levels);
    if (component >= spec_.dimension()) throw std::out_of_range("component index");
    if (node > grid_.steps()) throw std::out_of_range("node beyond the solver grid");
    std::vector<double> a(node + 1), bs(node + 1);
    audit_drift(fast_column(component, node, fast_weights(levels, component, node), a, bs));
    return a[node];
}

std::vector<Eigen::MatrixXd> MildEngine::shifted_table(const Levels& levels) const {
    if (!fast_) throw UnsupportedOperation("shifted tables need d = 1 or a decoupled drift");
    check_levels(levels);
    const std::size_t n1 = grid_.steps() + 1;
    std::vector<Eigen::MatrixXd> out;
    std::vector<double> a(n1), bs(n1);
    double max_abs = 0.0;
    for (std::size_t i = 0; i < spec_.dimension(); ++i) {
        const Eigen::MatrixXd w = fast_weights(levels, i, grid_.steps());
        Eigen::MatrixXd table = Eigen::MatrixXd::Constant(ix(n1), ix(n1), kNaN);
        for (std::size_t p = 0; p < n1; ++p) {
            max_abs = std::max(max_abs, fast_column(i, p, w, a, bs));
            for (std::size_t m = 0; m <= p; ++m) table(ix(m), ix(p)) = a[m];
        }
        out.push_back(std::move(table));
    }
    audit_drift(max_abs);
    return out;
}

Sensitivities MildEngine::sensitivities(const Levels& levels,
                                        const std::vector<Eigen::MatrixXd>& level_gradient) const {
    const std::size_t d = spec_.dimension();
    if (d > 1 && !spec_.drift.decoupled) {
        throw UnsupportedOperation("sensitivities of a coupled multi-component system are not implemented");
    }
    if (!spec_.drift.differentiable()) {
        throw UnsupportedOperation(fmt::format("drift '{}' has no derivative", spec_.drift.id));
    }
    if (!fast_) throw UnsupportedOperation("sensitivities need the triangular recursion");
    check_levels(levels);
    if (level_gradient.size() != d) throw std::invalid_argument("level gradient does not match the dimension");

    const std::size_t n1 = grid_.steps() + 1;
    const auto kp = static_cast<std::size_t>(level_gradient.front().rows());
    for (const auto& g : level_gradient) {
        if (static_cast<std::size_t>(g.rows()) != kp || static_cast<std::size_t>(g.cols()) != n1) {
            throw std::invalid_argument("level gradient has the wrong shape");
        }
    }
    const double dt = grid_.delta();
    const FastTables& tab = *fast_tables_;
    Sensitivities out(n1, d, kp);
    std::vector<double> x(d, kNaN);
    std::vector<double> a(n1), bs(n1), bp(n1);
    for (std::size_t i = 0; i < d; ++i) {
        const Eigen::MatrixXd w = fast_weights(levels, i, grid_.steps());
        const Eigen::MatrixXd& g = level_gradient[i];
        const double c = spec_.c[i];
        for (std::size_t p = 0; p < n1; ++p) {
            Eigen::MatrixXd da = Eigen::MatrixXd::Zero(ix(kp), ix(p + 1));
            for (std::size_t m = 0; m <= p; ++m) {
                double acc = c;
                if (m > 0) {
                    const double f0 = c * w(0, ix(m)) * tab.s(i, 0, m, p);
                    acc = f0;
                    da.col(ix(m)) = f0 * (g.col(ix(m)) - g.col(0));
                    for (std::size_t l = 0; l < m; ++l) {
                        const double f = dt * w(ix(l), ix(m)) * tab.s(i, l, m, p);
                        acc += f * bs[l];
                        da.col(ix(m)) += f * (bp[l] * da.col(ix(l)) + bs[l] * (g.col(ix(m)) - g.col(ix(l))));
                    }
                }
                a[m] = acc;
                if (m < p) {
                    x[i] = acc;
                    bs[m] = spec_.drift.value(i, grid_.node(m), x);
                    bp[m] = spec_.drift.partial(i, i, grid_.node(m), x);
                }
            }
            for (std::size_t k = 0; k < kp; ++k) out(p, i, k) = da(ix(k), ix(p));
        }
    }
    return out;
}

// ------------------------------------------------------------- TruncatedModel

TruncatedModel::TruncatedModel(std::shared_ptr<const SigmaCoeffs> coeffs, std::size_t k)
    : coeffs_(std::move(coeffs)), k_(k) {
    if (!coeffs_) throw std::invalid_argument("missing Sigma table");
    if (k_ == 0 || k_ > coeffs_->basis_size()) {
        throw std::out_of_range(fmt::format("truncation K = {} outside 1..{}", k_, coeffs_->basis_size()));
    }
    std::vector<Eigen::MatrixXd> prefix;
    for (std::size_t i = 0; i < coeffs_->components(); ++i) prefix.push_back(truncated_prefix_gram(*coeffs_, i, k_));
    geometry_ = std::make_shared<const KernelGeometry>(std::move(prefix));
}

Levels TruncatedModel::levels(std::span<const double> z) const {
    const std::size_t d = coeffs_->components();
    if (z.size() != d * k_) throw std::invalid_argument("z must hold d * K coordinates");
    const std::size_t n1 = coeffs_->nodes();
    Levels out;
    for (std::size_t i = 0; i < d; ++i) {
        const auto& c = coeffs_->cumulative(i);
        Eigen::VectorXd l(ix(n1));
        for (std::size_t x = 0; x < n1; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < k_; ++k) acc += z[i * k_ + k] * c(ix(k), ix(x));
            l(ix(x)) = acc;
        }
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<Eigen::MatrixXd> TruncatedModel::level_gradient() const {
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t i = 0; i < coeffs_->components(); ++i) out.emplace_back(coeffs_->cumulative(i).topRows(ix(k_)));
    return out;
}

// ------------------------------------------------------------- ReferenceModel

ReferenceModel::ReferenceModel(const PhiGram& gram, std::span<const StepFunction> sigma, const SolverGrid& grid)
    : steps_(grid.steps()) {
    std::vector<std::size_t> node_index;
    for (double t : grid.nodes().points()) node_index.push_back(gram.grid().require_index(t));
    std::vector<Eigen::MatrixXd> prefix;
    for (const auto& s : sigma) prefix.push_back(exact_prefix_gram(gram, s, node_index));
    geometry_ = std::make_shared<const KernelGeometry>(std::move(prefix));
}

Levels ReferenceModel::levels(std::span<const double> g) const {
    const std::size_t d = geometry_->components();
    if (g.size() != d * steps_) throw std::invalid_argument("g must hold d * N cell integrals");
    Levels out;
    for (std::size_t i = 0; i < d; ++i) {
        Eigen::VectorXd l(ix(steps_ + 1));
        l(0) = 0.0;
        for (std::size_t m = 0; m < steps_; ++m) l(ix(m + 1)) = l(ix(m)) + g[i * steps_ + m];
        out.push_back(std::move(l));
    }
    return out;
}

// ----------------------------------------------------------------- free helpers

GaussianFrame make_crn_frame(const PhiBasis& basis, std::size_t k, std::span<const StepFunction> sigma,
                             const SolverGrid& grid) {
    if (k > basis.size()) throw std::out_of_range("frame truncation beyond basis size");
    GaussianFrame frame;
    for (const auto& s : sigma) {
        std::vector<StepFunction> kernels;
        for (std::size_t j = 0; j < k; ++j) kernels.push_back(basis.vector(j));
        for (std::size_t m = 0; m < grid.steps(); ++m) {
            kernels.push_back(StepFunction::indicator(s.grid_ptr(), grid.node(m), grid.node(m + 1)) * s);
        }
        frame.components.push_back(std::move(kernels));
    }
    return frame;
}

void split_crn_draw(std::span<const double> draw, std::size_t d, std::size_t k, std::size_t steps,
                    std::span<double> z, std::span<double> g) {
    const std::size_t stride = k + steps;
    if (draw.size() != d * stride || z.size() != d * k || g.size() != d * steps) {
        throw std::invalid_argument("CRN draw has the wrong layout");
    }
    for (std::size_t i = 0; i < d; ++i) {
        std::copy_n(draw.begin() + static_cast<std::ptrdiff_t>(i * stride), k,
                    z.begin() + static_cast<std::ptrdiff_t>(i * k));
        std::copy_n(draw.begin() + static_cast<std::ptrdiff_t>(i * stride + k), steps,
                    g.begin() + static_cast<std::ptrdiff_t>(i * steps));
    }
}

PathSolution solve_truncated(const ProblemSpec& spec, std::shared_ptr<const SigmaCoeffs> coeffs, std::size_t k,
                             const SolverGrid& grid, std::span<const double> z, const SolverOptions& options) {
    TruncatedModel model(std::move(coeffs), k);
    MildEngine engine(spec, grid, model.geometry(), options);
    return engine.solve(model.levels(z));
}

PathSolution solve_reference(const ProblemSpec& spec, const PhiGram& gram, const SolverGrid& grid,
                             std::span<const double> g, const SolverOptions& options) {
    ReferenceModel model(gram, spec.sigma, grid);
    MildEngine engine(spec, grid, model.geometry(), options);
    return engine.solve(model.levels(g));
}

Sensitivities forward_sensitivities(const ProblemSpec& spec, std::shared_ptr<const SigmaCoeffs> coeffs,
                                    std::size_t k, const SolverGrid& grid, std::span<const double> z) {
    TruncatedModel model(std::move(coeffs), k);
    MildEngine engine(spec, grid, model.geometry());
    return engine.sensitivities(model.levels(z), model.level_gradient());
}

}  // namespace fracwick
