// SPDX-License-Identifier: MIT
#pragma once

#include "fracwick/analysis.hpp"
#include "fracwick/phi_hilbert.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fracwick {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct TestFunctionSpec {
    std::string name;
    std::string kind = "bump";  ///< "bump" or "constant"
    double t0 = 0.5, t_width = 0.4, x0 = 1.0, x_width = 0.5;
    double value = 1.0;

    TestFunction build() const;
};

struct BoundSettings {
    bool enabled = false;
    std::vector<std::array<double, 3>> exponents;  ///< (p, p1, p2)
    std::vector<std::size_t> ks;
    std::vector<std::pair<double, double>> intervals;
    std::size_t n = 10000;
};

struct FokkerPlanckSettings {
    bool enabled = false;
    std::size_t k = 4;
    std::size_t steps = 32;
    std::size_t n = 100000;
    std::size_t bins = 100;
    std::vector<TestFunctionSpec> tests;
};

struct ExperimentConfig {
    // problem
    std::string drift_id = "sin";
    std::map<std::string, double> drift_params;
    std::vector<std::vector<double>> sigma;  ///< per component: one value (constant) or M cell values
    std::vector<double> c;
    double hurst = 0.7;
    double horizon = 1.0;
    // discretization
    std::size_t cells = 128;  ///< M
    std::size_t steps = 16;   ///< N
    std::vector<std::size_t> ladder;
    SeedFamily family = SeedFamily::dyadic;
    std::size_t dyadic_cells = 16;
    // sampling
    std::size_t n = 10000;
    std::uint64_t seed = 42;
    unsigned workers = 1;
    // analyses
    bool convergence = true;
    bool gronwall = true;
    BoundSettings bound;
    FokkerPlanckSettings fp;

    std::size_t dimension() const noexcept { return c.size(); }
    /// Number of basis vectors the enabled analyses need.
    std::size_t basis_size() const;
    /// Every semantic field, defaults filled in; seed and workers excluded.
    nlohmann::json canonical() const;
    nlohmann::json to_json() const;
};

/// Validates on load and throws ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a (64 bit) of the canonical JSON text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Problem, phi Gram, basis and solver grid for `steps` solver steps.
ModelSetup build_setup(const ExperimentConfig& config, std::size_t steps);

/// Floats with 17 significant digits.
std::string format_real(double v);

struct RunResult {
    int exit_code = 0;
    std::vector<std::string> failures;
    std::vector<std::string> files;
};

/// Runs the enabled analyses and writes manifest.json first, then the CSVs
/// into `out_dir`. Exit code 0 when every gate passes, 1 otherwise.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Writes basis.csv to `out_dir` and prints Gram diagnostics.
void dump_basis(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Fast built-in checks with closed-form answers; returns the names of the
/// failing checks.
std::vector<std::string> run_selftest(std::ostream& log);

}  // namespace fracwick
