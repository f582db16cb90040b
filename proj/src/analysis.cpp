// SPDX-License-Identifier: MIT
#include "fracwick/analysis.hpp"

#include "fracwick/errors.hpp"
#include "fracwick/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace fracwick {

namespace {

inline Eigen::Index ix(std::size_t n) { return static_cast<Eigen::Index>(n); }

double drift_at(const Drift& drift, std::size_t d, std::size_t i, double t, double xi) {
    std::vector<double> x(d, std::numeric_limits<double>::quiet_NaN());
    x[i] = xi;
    return drift.value(i, t, x);
}

// |sigma_i^K(r,t) - chi_[t_r,t_t] sigma_i|_phi, formed from the difference
// itself so exact rungs read at roundoff level.
double projection_defect(const ModelSetup& setup, const SigmaCoeffs& coeffs, std::size_t i, std::size_t r,
                         std::size_t t, std::size_t k) {
    const StepFunction gap =
        coeffs.projection(i, r, t, k) - coeffs.sigma(i).restrict_to(setup.grid.node(r), setup.grid.node(t));
    return std::sqrt(std::max(0.0, setup.gram->norm_sq(gap)));
}

void require_triangular(const ProblemSpec& spec, const char* what) {
    if (spec.dimension() > 1 && !spec.drift.decoupled) {
        throw UnsupportedOperation(fmt::format("{} needs d = 1 or a decoupled drift", what));
    }
}

void check_ladder(std::span<const std::size_t> ladder, std::size_t basis_size) {
    if (ladder.empty()) throw std::invalid_argument("empty K ladder");
    if (ladder.front() == 0) throw std::invalid_argument("K ladder must start at 1 or more");
    for (std::size_t j = 1; j < ladder.size(); ++j) {
        if (ladder[j] <= ladder[j - 1]) throw std::invalid_argument("K ladder must be strictly increasing");
    }
    if (ladder.back() > basis_size) {
        throw std::invalid_argument(fmt::format("K = {} exceeds the basis size {}", ladder.back(), basis_size));
    }
}

SampleBatch sample_frame(const GaussianFrame& frame, const PhiGram& gram, std::size_t n, std::uint64_t seed,
                         unsigned workers) {
    return sample(build_covariance(frame, gram), n, seed, workers);
}

/// z restricted to the first k coordinates of each component.
void truncate_z(std::span<const double> z_full, std::size_t d, std::size_t kmax, std::size_t k,
                std::span<double> out) {
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = z_full[i * kmax + j];
    }
}

bool within(double mean, double se, double n_se) { return std::abs(mean) <= n_se * se + 1e-12; }

}  // namespace

McEstimate mc_estimate(std::span<const double> samples) {
    McEstimate out;
    out.n = samples.size();
    if (samples.empty()) return out;
    double sum = 0.0;
    for (double v : samples) sum += v;
    out.mean = sum / static_cast<double>(out.n);
    if (out.n < 2) return out;
    double ss = 0.0;
    for (double v : samples) ss += (v - out.mean) * (v - out.mean);
    out.std_err = std::sqrt(ss / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
    return out;
}

std::shared_ptr<const SigmaCoeffs> ModelSetup::coeffs(std::size_t k) const {
    if (k > basis->size()) throw std::out_of_range("K beyond basis size");
    return std::make_shared<const SigmaCoeffs>(basis->truncated(k), spec.sigma, grid.nodes());
}

// -------------------------------------------------------------- convergence

bool ConvergenceReport::nonincreasing(double n_se) const {
    for (std::size_t j = 1; j < rows.size(); ++j) {
        if (rows[j].l1_error > rows[j - 1].l1_error + n_se * step_std_err[j] + 1e-12) return false;
    }
    return true;
}

double gronwall_envelope(const ProblemSpec& spec, double t) {
    double c = 0.0;
    for (double ci : spec.c) c += std::abs(ci);
    return 2.0 * c + 2.0 * static_cast<double>(spec.dimension()) * spec.drift.bound * t;
}

ConvergenceReport l1_convergence(const ModelSetup& setup, std::span<const std::size_t> ladder, std::size_t n,
                                 std::uint64_t seed, unsigned workers, bool with_gronwall) {
    const ProblemSpec& spec = setup.spec;
    require_triangular(spec, "L1 convergence");
    check_ladder(ladder, setup.basis->size());
    if (n < 2) throw std::invalid_argument("need at least two draws");

    const std::size_t d = spec.dimension();
    const std::size_t steps = setup.grid.steps();
    const std::size_t n1 = steps + 1;
    const std::size_t kmax = ladder.back();
    const std::size_t rungs = ladder.size();
    const double dt = setup.grid.delta();

    auto coeffs = setup.coeffs(kmax);
    ReferenceModel ref(*setup.gram, spec.sigma, setup.grid);
    MildEngine ref_engine(spec, setup.grid, ref.geometry());
    std::vector<TruncatedModel> models;
    std::vector<MildEngine> engines;
    for (std::size_t k : ladder) {
        models.emplace_back(coeffs, k);
        engines.emplace_back(spec, setup.grid, models.back().geometry());
    }

    const SampleBatch batch =
        sample_frame(make_crn_frame(*setup.basis, kmax, spec.sigma, setup.grid), *setup.gram, n, seed, workers);

    // per draw s, rung j, node: |X^K - X|_1 and the sampled M^K term
    std::vector<double> err(n * rungs * n1, 0.0);
    std::vector<double> mterm(with_gronwall ? n * rungs * n1 : 0, 0.0);
    auto at = [&](std::size_t s, std::size_t j, std::size_t node) { return (s * rungs + j) * n1 + node; };

    parallel_for(n, workers, [&](std::size_t s) {
        std::vector<double> z_full(d * kmax), g(d * steps);
        split_crn_draw(batch.draw(s), d, kmax, steps, z_full, g);
        const Levels lref = ref.levels(g);
        const PathSolution x = ref_engine.solve(lref);
        std::vector<Eigen::MatrixXd> table;
        if (with_gronwall) table = ref_engine.shifted_table(lref);

        for (std::size_t j = 0; j < rungs; ++j) {
            const std::size_t k = ladder[j];
            std::vector<double> z(d * k);
            truncate_z(z_full, d, kmax, k, z);
            const Levels lk = models[j].levels(z);
            const PathSolution xk = engines[j].solve(lk);
            for (std::size_t node = 0; node < n1; ++node) {
                double e = 0.0;
                for (std::size_t i = 0; i < d; ++i) e += std::abs(xk.at(node, i) - x.at(node, i));
                err[at(s, j, node)] = e;
            }
            if (!with_gronwall) continue;

            const KernelGeometry& gk = *models[j].geometry();
            for (std::size_t node = 1; node < n1; ++node) {
                double m = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double ek = std::exp(engines[j].log_exponential(lk, i, 0, node));
                    const double ex = std::exp(ref_engine.log_exponential(lref, i, 0, node));
                    m += std::abs(spec.c[i]) * std::abs(ek - ex);
                    for (std::size_t l = 0; l < node; ++l) {
                        const double tl = setup.grid.node(l);
                        // exact solution at t_l translated along sigma^K(t_l, t_node)
                        Levels shifted = lref;
                        for (std::size_t y = 0; y <= l; ++y) {
                            shifted[i](ix(y)) -= gk.prefix(i)(ix(y), ix(node)) - gk.prefix(i)(ix(y), ix(l));
                        }
                        const double b_trunc = drift_at(spec.drift, d, i, tl, ref_engine.value_at(shifted, i, l));
                        const double b_exact = drift_at(spec.drift, d, i, tl, table[i](ix(l), ix(node)));
                        const double wk = std::exp(engines[j].log_exponential(lk, i, l, node));
                        const double wx = std::exp(ref_engine.log_exponential(lref, i, l, node));
                        m += dt * std::abs(b_trunc * wk - b_exact * wx);
                    }
                }
                mterm[at(s, j, node)] = m;
            }
        }
    });

    ConvergenceReport report;
    report.seed = seed;
    report.n = n;
    report.steps = steps;

    std::vector<double> col(n);
    std::vector<double> prev(n);
    for (std::size_t j = 0; j < rungs; ++j) {
        for (std::size_t s = 0; s < n; ++s) col[s] = err[at(s, j, steps)];
        const McEstimate est = mc_estimate(col);
        ConvergenceRow row;
        row.k = ladder[j];
        row.l1_error = est.mean;
        row.std_err = est.std_err;
        row.n = n;
        double defect = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t r = 0; r < n1; ++r) {
                for (std::size_t t = r + 1; t < n1; ++t) {
                    defect = std::max(defect, projection_defect(setup, *coeffs, i, r, t, ladder[j]));
                }
            }
        }
        row.sigma_defect_phi = defect;
        report.rows.push_back(row);
        if (j == 0) {
            report.step_std_err.push_back(0.0);
        } else {
            std::vector<double> diff(n);
            for (std::size_t s = 0; s < n; ++s) diff[s] = col[s] - prev[s];
            report.step_std_err.push_back(mc_estimate(diff).std_err);
        }
        prev = col;
    }

    if (!with_gronwall) return report;

    const double ld = spec.drift.lipschitz * static_cast<double>(d);
    std::vector<double> m_mean(rungs * n1, 0.0), m_se(rungs * n1, 0.0);
    std::vector<double> diff(n);
    for (std::size_t j = 0; j < rungs; ++j) {
        for (std::size_t node = 0; node < n1; ++node) {
            for (std::size_t s = 0; s < n; ++s) col[s] = mterm[at(s, j, node)];
            const McEstimate me = mc_estimate(col);
            m_mean[j * n1 + node] = me.mean;
            m_se[j * n1 + node] = me.std_err;

            const double tn = setup.grid.node(node);
            double bound = me.mean;
            for (std::size_t l = 0; l < node; ++l) {
                bound += ld * dt * m_mean[j * n1 + l] * std::exp(ld * (tn - setup.grid.node(l)));
            }
            double e_sum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                double b = mterm[at(s, j, node)];
                for (std::size_t l = 0; l < node; ++l) {
                    b += ld * dt * mterm[at(s, j, l)] * std::exp(ld * (tn - setup.grid.node(l)));
                }
                diff[s] = err[at(s, j, node)] - b;
                e_sum += err[at(s, j, node)];
            }
            const McEstimate slack = mc_estimate(diff);
            GronwallCheck check;
            check.k = ladder[j];
            check.node = node;
            check.error = e_sum / static_cast<double>(n);
            check.m_estimate = me.mean;
            check.m_std_err = me.std_err;
            check.bound = bound;
            check.slack_std_err = slack.std_err;
            check.pass = slack.mean <= 3.0 * slack.std_err + 1e-12;
            report.gronwall_checks.push_back(check);
        }
    }
    for (std::size_t node = 0; node < n1; ++node) {
        GronwallRow row;
        row.t = setup.grid.node(node);
        row.envelope = gronwall_envelope(spec, row.t);
        double se = 0.0;
        for (std::size_t j = 0; j < rungs; ++j) {
            if (m_mean[j * n1 + node] >= row.estimate) {
                row.estimate = m_mean[j * n1 + node];
                se = m_se[j * n1 + node];
            }
        }
        row.pass = row.estimate <= row.envelope + 3.0 * se + 1e-12;
        for (const auto& c : report.gronwall_checks) {
            if (c.node == node) row.pass = row.pass && c.pass;
        }
        report.gronwall.push_back(row);
    }
    return report;
}

// ------------------------------------------------------------ moment bound

void check_holder_exponents(double p, double p1, double p2) {
    if (!(p >= 1.0)) throw ConfigError("p", fmt::format("p = {} must be at least 1", p));
    if (!(p1 > p) || !(p2 > p)) throw ConfigError("p1/p2", "Hoelder exponents must exceed p");
    if (std::abs(1.0 / p1 + 1.0 / p2 - 1.0 / p) > 1e-12) {
        throw ConfigError("p1/p2", fmt::format("1/p1 + 1/p2 = {} differs from 1/p = {}", 1.0 / p1 + 1.0 / p2, 1.0 / p));
    }
}

double appendix_constant(double p, double p1, double p2, double sigma_bound, double horizon, Hurst h,
                         double norm_sq) {
    const double first = std::pow(2.0, 1.5 * p - 1.0) * std::exp(p * (p1 - 1.0) / 2.0 * norm_sq) *
                         std::exp(p / p2 * std::lgamma(p2 + 1.0)) / std::sqrt(std::numbers::pi);
    const double second = std::pow(2.0, 2.0 * p - 1.0) * std::pow(sigma_bound, 2.0 * p) *
                          std::pow(horizon, h.two_h() * p) * std::exp(p * (p - 1.0) / 2.0 * norm_sq);
    return first + second;
}

BoundCheckRecord appendix_bound_check(const ModelSetup& setup, std::size_t component, double s, double t, double p,
                                      double p1, double p2, std::size_t k, std::size_t n, std::uint64_t seed,
                                      unsigned workers) {
    check_holder_exponents(p, p1, p2);
    const ProblemSpec& spec = setup.spec;
    if (component >= spec.dimension()) throw std::out_of_range("component index");
    if (!(s < t)) throw std::invalid_argument("bound check needs s < t");
    if (k == 0 || k > setup.basis->size()) throw std::out_of_range("K outside the basis");

    const StepFunction& sigma = spec.sigma[component];
    const StepFunction chi = StepFunction::indicator(sigma.grid_ptr(), s, t) * sigma;
    const PhiGram& gram = *setup.gram;
    std::vector<double> shifts(k);
    double vk = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        shifts[j] = gram.inner(chi, setup.basis->vector(j));
        vk += shifts[j] * shifts[j];
    }
    const double v = gram.norm_sq(chi);

    GaussianFrame frame;
    std::vector<StepFunction> kernels(setup.basis->vectors().begin(),
                                      setup.basis->vectors().begin() + static_cast<std::ptrdiff_t>(k));
    kernels.push_back(chi);
    frame.components.push_back(std::move(kernels));
    const SampleBatch batch = sample_frame(frame, gram, n, seed, workers);

    std::vector<double> y(n);
    parallel_for(n, workers, [&](std::size_t j) {
        const auto draw = batch.draw(j);
        const double ek = wick_exponential(draw.first(k), shifts, vk).value;
        const double ex = WickExponentialEval::from_log(draw[k] - 0.5 * v).value;
        y[j] = std::pow(std::abs(ek - ex), p);
    });
    const McEstimate est = mc_estimate(y);

    BoundCheckRecord rec;
    rec.p = p;
    rec.p1 = p1;
    rec.p2 = p2;
    rec.k = k;
    rec.component = component;
    rec.s = s;
    rec.t = t;
    rec.lhs = est.mean;
    rec.lhs_se = est.std_err;
    rec.lhs_ci = est.mean + 3.0 * est.std_err;
    rec.c = appendix_constant(p, p1, p2, spec.sigma_bound(), spec.horizon, spec.hurst, v);
    StepFunction gap = chi * -1.0;
    for (std::size_t j = 0; j < k; ++j) gap = gap + setup.basis->vector(j) * shifts[j];
    rec.defect = std::sqrt(std::max(0.0, gram.norm_sq(gap)));
    rec.rhs = rec.c * std::pow(rec.defect, p);
    if (rec.rhs > 0.0) {
        rec.ratio = rec.lhs / rec.rhs;
    } else {
        rec.ratio = rec.lhs <= kBoundRoundoff ? 0.0 : std::numeric_limits<double>::infinity();
    }
    rec.pass = rec.lhs_ci <= rec.rhs + kBoundRoundoff;
    return rec;
}

// ----------------------------------------------------------- Fokker-Planck

namespace {

// psi(u) = exp(-1/(1-u^2)) and its first two derivatives, zero for |u| >= 1.
struct Bump {
    static double f(double u) {
        const double q = 1.0 - u * u;
        return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
    }
    static double d1(double u) {
        const double q = 1.0 - u * u;
        return q > 0.0 ? f(u) * (-2.0 * u / (q * q)) : 0.0;
    }
    static double d2(double u) {
        const double q = 1.0 - u * u;
        if (!(q > 0.0)) return 0.0;
        return f(u) * (4.0 * u * u / (q * q * q * q) - 2.0 / (q * q) - 8.0 * u * u / (q * q * q));
    }
};

}  // namespace

TestFunction bump_test_function(std::string name, double t0, double t_width, double x0, double x_width) {
    if (!(t_width > 0.0) || !(x_width > 0.0)) throw std::invalid_argument("bump widths must be positive");
    TestFunction tf;
    tf.name = std::move(name);
    tf.value = [=](double t, double x) { return Bump::f((t - t0) / t_width) * Bump::f((x - x0) / x_width); };
    tf.dt = [=](double t, double x) {
        return Bump::d1((t - t0) / t_width) / t_width * Bump::f((x - x0) / x_width);
    };
    tf.dx = [=](double t, double x) {
        return Bump::f((t - t0) / t_width) * Bump::d1((x - x0) / x_width) / x_width;
    };
    tf.dxx = [=](double t, double x) {
        return Bump::f((t - t0) / t_width) * Bump::d2((x - x0) / x_width) / (x_width * x_width);
    };
    return tf;
}

TestFunction constant_test_function(std::string name, double value) {
    TestFunction tf;
    tf.name = std::move(name);
    tf.value = [value](double, double) { return value; };
    tf.dt = [](double, double) { return 0.0; };
    tf.dx = [](double, double) { return 0.0; };
    tf.dxx = [](double, double) { return 0.0; };
    return tf;
}

FokkerPlanckReport fokker_planck_residual(const ModelSetup& setup, std::size_t k,
                                          std::span<const TestFunction> tests, std::size_t n, std::size_t bins,
                                          std::uint64_t seed, unsigned workers) {
    const ProblemSpec& spec = setup.spec;
    if (spec.dimension() != 1) throw UnsupportedOperation("the Fokker-Planck check is restricted to d = 1");
    if (!spec.drift.differentiable()) {
        throw UnsupportedOperation(fmt::format("drift '{}' has no derivative", spec.drift.id));
    }
    if (k == 0 || k > setup.basis->size()) throw std::out_of_range("K outside the basis");
    if (bins < 10) throw std::invalid_argument("the conditional-expectation estimator needs at least 10 bins");
    if (n / bins < kMinSamplesPerBin) {
        throw EstimatorUndersampled(fmt::format("{} draws over {} bins leaves fewer than {} per bin", n, bins,
                                                kMinSamplesPerBin));
    }

    const std::size_t steps = setup.grid.steps();
    const std::size_t n1 = steps + 1;
    const double dt = setup.grid.delta();
    auto coeffs = setup.coeffs(k);
    TruncatedModel model(coeffs, k);
    MildEngine engine(spec, setup.grid, model.geometry());
    const auto gradient = model.level_gradient();

    GaussianFrame frame;
    frame.components.emplace_back(setup.basis->vectors().begin(),
                                  setup.basis->vectors().begin() + static_cast<std::ptrdiff_t>(k));
    const SampleBatch batch = sample_frame(frame, *setup.gram, n, seed, workers);

    std::vector<double> x(n * n1), dx(n * n1 * k);
    parallel_for(n, workers, [&](std::size_t s) {
        const auto z = batch.draw(s);
        const Levels levels = model.levels(z);
        const PathSolution path = engine.solve(levels);
        const Sensitivities sens = engine.sensitivities(levels, gradient);
        for (std::size_t node = 0; node < n1; ++node) {
            x[s * n1 + node] = path.at(node, 0);
            for (std::size_t j = 0; j < k; ++j) dx[(s * n1 + node) * k + j] = sens(node, 0, j);
        }
    });

    FokkerPlanckReport report;
    std::vector<double> y(n);

    // Gaussian integration by parts on polynomials and on the solver output
    auto stein = [&](std::string name, auto&& sample_fn) {
        for (std::size_t s = 0; s < n; ++s) y[s] = sample_fn(s);
        const McEstimate e = mc_estimate(y);
        report.stein.push_back({std::move(name), e.mean, e.std_err, within(e.mean, e.std_err, 4.0)});
    };
    stein("z1*z1^2 vs 2*z1", [&](std::size_t s) {
        const double z = batch.draw(s)[0];
        return z * z * z - 2.0 * z;
    });
    stein("z1*z1^4 vs 4*z1^3", [&](std::size_t s) {
        const double z = batch.draw(s)[0];
        return std::pow(z, 5) - 4.0 * z * z * z;
    });
    if (k >= 2) {
        stein("z1*z1^2*z2 vs 2*z1*z2", [&](std::size_t s) {
            const double a = batch.draw(s)[0];
            const double b = batch.draw(s)[1];
            return a * a * a * b - 2.0 * a * b;
        });
    }
    for (std::size_t j = 0; j < k; ++j) {
        stein(fmt::format("z{0}*X(T) vs dX(T)/dz{0}", j + 1), [&](std::size_t s) {
            return batch.draw(s)[j] * x[s * n1 + steps] - dx[(s * n1 + steps) * k + j];
        });
    }

    // equal-count bins of X(t_n); ghat holds each draw's bin mean of dX/dz_j
    std::vector<double> ghat(n * n1 * k, 0.0);
    const bool zero_drift = spec.drift.bound == 0.0;
    std::vector<std::size_t> order(n);
    for (std::size_t node = 0; node < n1; ++node) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return x[a * n1 + node] < x[b * n1 + node]; });
        for (std::size_t b = 0; b < bins; ++b) {
            const std::size_t lo = n * b / bins;
            const std::size_t hi = n * (b + 1) / bins;
            const auto count = static_cast<double>(hi - lo);
            double x_mean = 0.0;
            for (std::size_t q = lo; q < hi; ++q) x_mean += x[order[q] * n1 + node];
            x_mean /= count;
            for (std::size_t j = 0; j < k; ++j) {
                double mean = 0.0;
                for (std::size_t q = lo; q < hi; ++q) mean += dx[(order[q] * n1 + node) * k + j];
                mean /= count;
                for (std::size_t q = lo; q < hi; ++q) ghat[(order[q] * n1 + node) * k + j] = mean;
                if (zero_drift && node > 0) {
                    double ss = 0.0;
                    for (std::size_t q = lo; q < hi; ++q) {
                        const double v = dx[(order[q] * n1 + node) * k + j] - mean;
                        ss += v * v;
                    }
                    BinCheck check;
                    check.node = node;
                    check.k = j + 1;
                    check.bin = b;
                    check.estimate = mean;
                    check.closed_form = coeffs->value(0, j, 0, node) * x_mean;
                    check.std_err = std::sqrt(ss / (count - 1.0) / count);
                    check.pass = std::abs(check.estimate - check.closed_form) <=
                                 3.0 * check.std_err + 1e-12 * (1.0 + std::abs(check.closed_form));
                    report.bin_checks.push_back(check);
                }
            }
        }
    }

    // Sigma_k(t_n, t_{n+1}) = int over the cell of sigma xi_k
    std::vector<double> cell_weight(steps * k);
    for (std::size_t c = 0; c < steps; ++c) {
        for (std::size_t j = 0; j < k; ++j) cell_weight[c * k + j] = coeffs->value(0, j, c, c + 1);
    }
    std::vector<double> f_term(n1);
    for (const TestFunction& tf : tests) {
        for (std::size_t s = 0; s < n; ++s) {
            double acc = 0.0;
            for (std::size_t node = 0; node < n1; ++node) {
                const double t = setup.grid.node(node);
                const double xv = x[s * n1 + node];
                const double w = (node == 0 || node == steps) ? 0.5 : 1.0;
                acc += w * dt * (tf.dt(t, xv) + tf.dx(t, xv) * spec.drift.value(0, t, std::span<const double>(&xv, 1)));
                f_term[node] = tf.dxx(t, xv) * xv;
            }
            for (std::size_t c = 0; c < steps; ++c) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double left = f_term[c] * ghat[(s * n1 + c) * k + j];
                    const double right = f_term[c + 1] * ghat[(s * n1 + c + 1) * k + j];
                    acc += cell_weight[c * k + j] * 0.5 * (left + right);
                }
            }
            y[s] = acc;
        }
        const McEstimate e = mc_estimate(y);
        report.residuals.push_back({tf.name, e.mean, e.std_err, bins, within(e.mean, e.std_err, 3.0)});
    }
    return report;
}

// ------------------------------------------------------ further checks

std::vector<ContinuityRow> translation_continuity(const ModelSetup& setup, std::size_t s_node, std::size_t t_node,
                                                  std::span<const std::size_t> ladder, std::size_t n,
                                                  std::uint64_t seed, unsigned workers) {
    const ProblemSpec& spec = setup.spec;
    check_ladder(ladder, setup.basis->size());
    if (!(s_node <= t_node) || t_node > setup.grid.steps()) throw std::invalid_argument("need s <= t on the grid");
    const std::size_t d = spec.dimension();
    auto coeffs = setup.coeffs(ladder.back());
    ReferenceModel ref(*setup.gram, spec.sigma, setup.grid);
    const KernelGeometry& q = *ref.geometry();

    const SampleBatch batch =
        sample_frame(make_crn_frame(*setup.basis, 0, spec.sigma, setup.grid), *setup.gram, n, seed, workers);
    // |X_i(s)| per draw
    std::vector<double> xs(n * d);
    parallel_for(n, workers, [&](std::size_t s) {
        const Levels l = ref.levels(batch.draw(s));
        for (std::size_t i = 0; i < d; ++i) {
            xs[s * d + i] = std::abs(spec.c[i]) * std::exp(l[i](ix(s_node)) - 0.5 * q.variance(i, 0, s_node));
        }
    });

    std::vector<ContinuityRow> out;
    std::vector<double> y(n);
    for (std::size_t k : ladder) {
        std::vector<double> gap(d);
        for (std::size_t i = 0; i < d; ++i) {
            double a_k = 0.0;
            for (std::size_t j = 0; j < k; ++j) a_k += coeffs->value(i, j, 0, s_node) * coeffs->value(i, j, s_node, t_node);
            const double a = q.inner(i, 0, s_node, s_node, t_node);
            gap[i] = std::abs(std::exp(-a_k) - std::exp(-a));
        }
        for (std::size_t s = 0; s < n; ++s) {
            double v = 0.0;
            for (std::size_t i = 0; i < d; ++i) v += xs[s * d + i] * gap[i];
            y[s] = v;
        }
        const McEstimate e = mc_estimate(y);
        out.push_back({k, e.mean, e.std_err});
    }
    return out;
}

LpEnvelopeRecord lp_envelope_check(const ModelSetup& setup, std::size_t k, std::size_t component,
                                   std::size_t node, double p, std::size_t n, std::uint64_t seed,
                                   unsigned workers) {
    const ProblemSpec& spec = setup.spec;
    if (component >= spec.dimension()) throw std::out_of_range("component index");
    if (node > setup.grid.steps()) throw std::out_of_range("node beyond the solver grid");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be at least 1");
    const std::size_t d = spec.dimension();
    auto coeffs = setup.coeffs(k);
    TruncatedModel model(coeffs, k);
    MildEngine engine(spec, setup.grid, model.geometry());

    GaussianFrame frame;
    for (std::size_t i = 0; i < d; ++i) {
        frame.components.emplace_back(setup.basis->vectors().begin(),
                                      setup.basis->vectors().begin() + static_cast<std::ptrdiff_t>(k));
    }
    const SampleBatch batch = sample_frame(frame, *setup.gram, n, seed, workers);
    std::vector<double> y(n);
    parallel_for(n, workers, [&](std::size_t s) {
        const Eigen::VectorXd xv = engine.value_at(model.levels(batch.draw(s)), node);
        y[s] = std::pow(std::abs(xv(ix(component))), p);
    });
    const McEstimate e = mc_estimate(y);

    LpEnvelopeRecord rec;
    rec.component = component;
    rec.node = node;
    rec.p = p;
    rec.norm = std::pow(e.mean, 1.0 / p);
    rec.std_err = e.mean > 0.0 ? std::pow(e.mean, 1.0 / p - 1.0) / p * e.std_err : 0.0;
    const double t = setup.grid.node(node);
    double sup = 0.0;
    for (std::size_t r = 0; r <= node; ++r) {
        sup = std::max(sup, std::exp(0.5 * p * projection_norm_sq(*coeffs, component, r, node, k)));
    }
    rec.envelope = std::abs(spec.c[component]) * std::exp(0.5 * p * projection_norm_sq(*coeffs, component, 0, node, k)) +
                   spec.drift.bound * t * sup;
    rec.pass = rec.norm <= rec.envelope + 3.0 * rec.std_err;
    return rec;
}

}  // namespace fracwick
