// SPDX-License-Identifier: MIT
#include "fracwick/wick_core.hpp"

#include "fracwick/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace fracwick {

SigmaCoeffs::SigmaCoeffs(PhiBasis basis, std::vector<StepFunction> sigma, const TimeGrid& nodes)
    : basis_(std::move(basis)), sigma_(std::move(sigma)) {
    const TimeGrid& fine = basis_.grid();
    node_index_.reserve(nodes.points().size());
    for (double t : nodes.points()) node_index_.push_back(fine.require_index(t));

    const std::size_t m = fine.cells();
    const auto k = static_cast<Eigen::Index>(basis_.size());
    Eigen::MatrixXd ge(m, k);  // column k: G e_k
    for (Eigen::Index j = 0; j < k; ++j) ge.col(j) = basis_.gram().apply(basis_.vector(static_cast<std::size_t>(j)));

    for (const auto& s : sigma_) {
        basis_.gram().check_grid(s);
        // prefix(k, n) = <chi_[0, tau_n] sigma, e_k>_phi for every fine index n
        Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(m + 1));
        for (std::size_t c = 0; c < m; ++c) {
            const auto cc = static_cast<Eigen::Index>(c);
            prefix.col(cc + 1) = prefix.col(cc) + s.values()[c] * ge.row(cc).transpose();
        }
        Eigen::MatrixXd table(k, static_cast<Eigen::Index>(node_index_.size()));
        for (std::size_t n = 0; n < node_index_.size(); ++n) {
            table.col(static_cast<Eigen::Index>(n)) = prefix.col(static_cast<Eigen::Index>(node_index_[n]));
        }
        cumulative_.push_back(std::move(table));
    }
}

double SigmaCoeffs::value(std::size_t i, std::size_t k, std::size_t r, std::size_t t) const {
    if (r > t) throw std::invalid_argument("Sigma(r, t) needs r <= t");
    const auto& c = cumulative_.at(i);
    return c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) -
           c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r));
}

std::vector<double> SigmaCoeffs::shifts(std::size_t i, std::size_t r, std::size_t t,
                                        std::size_t k) const {
    if (k > basis_size()) throw std::out_of_range("shift count beyond basis size");
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = value(i, j, r, t);
    return out;
}

StepFunction SigmaCoeffs::projection(std::size_t i, std::size_t r, std::size_t t,
                                     std::size_t k) const {
    StepFunction acc = StepFunction::zero(sigma_.at(i).grid_ptr());
    for (std::size_t j = 0; j < k; ++j) acc = acc + basis_.vector(j) * value(i, j, r, t);
    return acc;
}

SigmaCoeffs sigma_coeffs(const PhiBasis& basis, std::span<const StepFunction> sigma,
                         const TimeGrid& nodes) {
    return SigmaCoeffs(basis, std::vector<StepFunction>(sigma.begin(), sigma.end()), nodes);
}

double projection_norm_sq(const SigmaCoeffs& coeffs, std::size_t i, std::size_t r, std::size_t t,
                          std::size_t k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double v = coeffs.value(i, j, r, t);
        acc += v * v;
    }
    return acc;
}

WickExponentialEval WickExponentialEval::from_log(double log_value) noexcept {
    return {log_value, std::exp(log_value)};
}

WickExponentialEval wick_exponential(std::span<const double> z, std::span<const double> shifts,
                                     double norm_sq) {
    if (z.size() != shifts.size()) throw std::invalid_argument("z and shifts must align");
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) acc += z[k] * shifts[k];
    return WickExponentialEval::from_log(acc - 0.5 * norm_sq);
}

double translation_shift(const StepFunction& g, const StepFunction& f, const PhiGram& gram) {
    return -inner_phi(g, f, gram);
}

Eigen::MatrixXd exact_prefix_gram(const PhiGram& gram, const StepFunction& sigma,
                                  std::span<const std::size_t> node_index) {
    gram.check_grid(sigma);
    const std::size_t m = gram.grid().cells();
    const Eigen::VectorXd s = sigma.vector();
    // weighted(a, b) = sigma_a G(a, b) sigma_b, then 2-D prefix sums.
    const Eigen::MatrixXd weighted = s.asDiagonal() * gram.entries() * s.asDiagonal();
    Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(m + 1, m + 1);
    for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(m); ++a) {
        for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(m); ++b) {
            prefix(a + 1, b + 1) = weighted(a, b) + prefix(a, b + 1) + prefix(a + 1, b) - prefix(a, b);
        }
    }
    const auto n = static_cast<Eigen::Index>(node_index.size());
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index y = 0; y < n; ++y) {
            q(x, y) = prefix(static_cast<Eigen::Index>(node_index[static_cast<std::size_t>(x)]),
                             static_cast<Eigen::Index>(node_index[static_cast<std::size_t>(y)]));
        }
    }
    return q;
}

Eigen::MatrixXd truncated_prefix_gram(const SigmaCoeffs& coeffs, std::size_t i, std::size_t k) {
    if (k > coeffs.basis_size()) throw std::out_of_range("truncation beyond basis size");
    const auto c = coeffs.cumulative(i).topRows(static_cast<Eigen::Index>(k));
    return c.transpose() * c;
}

}  // namespace fracwick
