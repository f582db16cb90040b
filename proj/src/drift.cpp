// SPDX-License-Identifier: MIT
#include "fracwick/drift.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fracwick {

namespace {

double param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

void check_keys(const std::string& id, const std::map<std::string, double>& params,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : params) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw std::invalid_argument("drift '" + id + "' has no parameter '" + key + "'");
        if (!std::isfinite(value)) throw std::invalid_argument("drift parameter '" + key + "' is not finite");
    }
}

}  // namespace

Drift make_drift(const std::string& id, const std::map<std::string, double>& params) {
    Drift d;
    d.id = id;
    d.params = params;
    if (id == "zero") {
        check_keys(id, params, {});
        d.value = [](std::size_t, double, std::span<const double>) { return 0.0; };
        d.partial = [](std::size_t, std::size_t, double, std::span<const double>) { return 0.0; };
        return d;
    }
    if (id == "sin") {
        check_keys(id, params, {"amplitude", "frequency"});
        const double a = param(params, "amplitude", 1.0);
        const double w = param(params, "frequency", 1.0);
        d.bound = std::abs(a);
        d.lipschitz = std::abs(a * w);
        d.value = [a, w](std::size_t i, double, std::span<const double> x) { return a * std::sin(w * x[i]); };
        d.partial = [a, w](std::size_t i, std::size_t j, double, std::span<const double> x) {
            return i == j ? a * w * std::cos(w * x[i]) : 0.0;
        };
        return d;
    }
    if (id == "tanh") {
        check_keys(id, params, {"amplitude", "scale"});
        const double a = param(params, "amplitude", 1.0);
        const double s = param(params, "scale", 1.0);
        if (!(s > 0.0)) throw std::invalid_argument("tanh drift needs scale > 0");
        d.bound = std::abs(a);
        d.lipschitz = std::abs(a) / s;
        d.value = [a, s](std::size_t i, double, std::span<const double> x) { return a * std::tanh(x[i] / s); };
        d.partial = [a, s](std::size_t i, std::size_t j, double, std::span<const double> x) {
            if (i != j) return 0.0;
            const double c = std::cosh(x[i] / s);
            return a / (s * c * c);
        };
        return d;
    }
    if (id == "coupled_sin") {
        check_keys(id, params, {"amplitude"});
        const double a = param(params, "amplitude", 1.0);
        d.bound = std::abs(a);
        d.lipschitz = std::abs(a);
        d.decoupled = false;
        d.value = [a](std::size_t, double, std::span<const double> x) {
            return a * std::sin(std::accumulate(x.begin(), x.end(), 0.0));
        };
        d.partial = [a](std::size_t, std::size_t, double, std::span<const double> x) {
            return a * std::cos(std::accumulate(x.begin(), x.end(), 0.0));
        };
        return d;
    }
    throw std::invalid_argument("unknown drift '" + id + "'");
}

std::vector<std::string> drift_registry() { return {"zero", "sin", "tanh", "coupled_sin"}; }

}  // namespace fracwick
