// SPDX-License-Identifier: MIT
#include "fracwick/gaussian_ensemble.hpp"

#include "fracwick/errors.hpp"
#include "fracwick/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace fracwick {

namespace {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : state_(mix64(seed ^ mix64(stream + 0x9e3779b97f4a7c15ULL))) {}

CounterRng::result_type CounterRng::operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
}

std::size_t GaussianFrame::dimension() const noexcept {
    std::size_t n = 0;
    for (const auto& c : components) n += c.size();
    return n;
}

std::size_t GaussianFrame::offset(std::size_t component) const {
    if (component >= components.size()) throw std::out_of_range("frame component");
    std::size_t n = 0;
    for (std::size_t i = 0; i < component; ++i) n += components[i].size();
    return n;
}

CovarianceModel::CovarianceModel(std::vector<Eigen::MatrixXd> blocks,
                                 std::vector<Eigen::MatrixXd> factors, double jitter_used)
    : blocks_(std::move(blocks)), factors_(std::move(factors)), jitter_(jitter_used) {
    if (blocks_.size() != factors_.size()) throw std::invalid_argument("block/factor count mismatch");
    for (const auto& b : blocks_) dimension_ += static_cast<std::size_t>(b.rows());
}

Eigen::MatrixXd CovarianceModel::matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dimension_, dimension_);
    Eigen::Index off = 0;
    for (const auto& b : blocks_) {
        m.block(off, off, b.rows(), b.cols()) = b;
        off += b.rows();
    }
    return m;
}

Eigen::MatrixXd CovarianceModel::factor() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dimension_, dimension_);
    Eigen::Index off = 0;
    for (const auto& f : factors_) {
        m.block(off, off, f.rows(), f.cols()) = f;
        off += f.rows();
    }
    return m;
}

void CovarianceModel::draw(std::uint64_t seed, std::uint64_t index, std::span<double> out) const {
    if (out.size() != dimension_) throw std::invalid_argument("draw buffer has wrong size");
    CounterRng rng(seed, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd xi(static_cast<Eigen::Index>(dimension_));
    for (Eigen::Index j = 0; j < xi.size(); ++j) xi(j) = normal(rng);
    Eigen::Index off = 0;
    for (const auto& f : factors_) {
        const Eigen::Index n = f.rows();
        Eigen::Map<Eigen::VectorXd> dst(out.data() + off, n);
        dst.noalias() = f.triangularView<Eigen::Lower>() * xi.segment(off, n);
        off += n;
    }
}

bool semidefinite_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
    const Eigen::Index n = a.rows();
    l = Eigen::MatrixXd::Zero(n, n);
    const double scale = n > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
    const double tol = kDependentPivot * scale;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (d > tol) {
            const double piv = std::sqrt(d);
            l(j, j) = piv;
            for (Eigen::Index i = j + 1; i < n; ++i) {
                l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / piv;
            }
        } else if (d < -tol) {
            return false;
        }
    }
    return true;
}

CovarianceModel build_covariance(const GaussianFrame& frame, const PhiGram& gram) {
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(frame.components.size());
    for (const auto& kernels : frame.components) {
        const auto n = static_cast<Eigen::Index>(kernels.size());
        Eigen::MatrixXd gk(gram.grid().cells(), n);
        for (Eigen::Index j = 0; j < n; ++j) gk.col(j) = gram.apply(kernels[static_cast<std::size_t>(j)]);
        Eigen::MatrixXd block(n, n);
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = 0; q <= p; ++q) {
                block(p, q) = block(q, p) = kernels[static_cast<std::size_t>(p)].vector().dot(gk.col(q));
            }
        }
        blocks.push_back(std::move(block));
    }

    for (double jitter : kJitterLadder) {
        std::vector<Eigen::MatrixXd> factors;
        bool ok = true;
        for (const auto& b : blocks) {
            Eigen::MatrixXd l;
            const Eigen::MatrixXd shifted =
                b + jitter * Eigen::MatrixXd::Identity(b.rows(), b.cols());
            if (!semidefinite_cholesky(shifted, l)) {
                ok = false;
                break;
            }
            factors.push_back(std::move(l));
        }
        if (ok) return CovarianceModel(std::move(blocks), std::move(factors), jitter);
    }
    throw IllConditionedFrame(fmt::format(
        "covariance factorization failed at maximum jitter {:.0e}", kJitterLadder[3]));
}

SampleBatch sample(const CovarianceModel& model, std::size_t n, std::uint64_t seed,
                   unsigned workers) {
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
    SampleBatch batch;
    batch.seed = seed;
    batch.count = n;
    batch.dimension = model.dimension();
    batch.draws.assign(n * batch.dimension, 0.0);
    if (batch.dimension == 0) return batch;
    parallel_for(n, workers, [&](std::size_t j) {
        model.draw(seed, j, std::span<double>(batch.draws).subspan(j * batch.dimension, batch.dimension));
    });
    return batch;
}

double fbm_covariance(double s, double t, Hurst h) {
    const double e = h.two_h();
    return 0.5 * (std::pow(t, e) + std::pow(s, e) - std::pow(std::abs(t - s), e));
}

double cm_partial_sum_covariance(const PhiBasis& basis, double s, double t, std::size_t k) {
    if (k > basis.size()) throw std::out_of_range("partial sum beyond basis size");
    const std::size_t is = basis.grid().require_index(s);
    const std::size_t it = basis.grid().require_index(t);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += basis.cm(j, is) * basis.cm(j, it);
    return acc;
}

}  // namespace fracwick
