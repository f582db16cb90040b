// SPDX-License-Identifier: MIT
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fracwick {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// phi_kernel evaluated on its diagonal s == t.
class DiagonalSingularity : public Error {
public:
    using Error::Error;
};

/// Step functions combined in one inner product live on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// Gram-Schmidt pivot collapsed: the seed family is dependent at `index`.
class DegenerateFamily : public Error {
public:
    DegenerateFamily(std::size_t index, const std::string& what)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Covariance factorization failed even at the largest jitter.
class IllConditionedFrame : public Error {
public:
    using Error::Error;
};

/// Coupled multi-component recursion would exceed the configured size.
class ComplexityGuard : public Error {
public:
    ComplexityGuard(double estimated_nodes, const std::string& what)
        : Error(what), estimated_nodes_(estimated_nodes) {}
    double estimated_nodes() const noexcept { return estimated_nodes_; }

private:
    double estimated_nodes_;
};

class UnsupportedOperation : public Error {
public:
    using Error::Error;
};

/// Conditional-expectation bins hold fewer samples than required.
class EstimatorUndersampled : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration; `field()` names the offending JSON path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace fracwick
