// SPDX-License-Identifier: MIT
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fracwick {

/// Bounded drift b(t, x) with declared sup bound and l1-Lipschitz constant.
/// A decoupled drift has b_i depending on x_i only and must not read other
/// entries of x.
struct Drift {
    using Value = std::function<double(std::size_t i, double t, std::span<const double> x)>;
    using Partial =
        std::function<double(std::size_t i, std::size_t j, double t, std::span<const double> x)>;

    std::string id;
    std::map<std::string, double> params;
    double bound = 0.0;      ///< M with |b|_inf <= M
    double lipschitz = 0.0;  ///< L with |b(t,x) - b(t,y)|_inf <= L |x - y|_1
    bool decoupled = true;
    Value value;
    Partial partial;  ///< d b_i / d x_j; empty when not differentiable

    bool differentiable() const noexcept { return static_cast<bool>(partial); }
};

/// Named drifts: "zero", "sin" (amplitude a, frequency w), "tanh"
/// (amplitude a, scale s), "coupled_sin" (a * sin(sum_j x_j)).
Drift make_drift(const std::string& id, const std::map<std::string, double>& params = {});

std::vector<std::string> drift_registry();

}  // namespace fracwick
