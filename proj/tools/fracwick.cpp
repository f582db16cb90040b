// SPDX-License-Identifier: MIT
// fracwick command line: run an experiment, print a basis, or self-test.

#include "fracwick/errors.hpp"
#include "fracwick/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGate = 1;
constexpr int kExitConfig = 2;

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("FRACWICK_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(raw, &used, 10);
        if (used != std::string(raw).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw fracwick::ConfigError("FRACWICK_SEED", fmt::format("'{}' is not a non-negative integer", raw));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wick-Wong-Zakai approximation of fBm-driven SDEs"};
    app.set_version_flag("--version", std::string(fracwick::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    unsigned workers = 0;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "Run the analyses of a config and write CSVs");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run->add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Master seed (overrides FRACWICK_SEED and the config)");

    auto* basis = app.add_subcommand("basis", "Write basis.csv and print Gram diagnostics");
    basis->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    basis->add_option("--out", out_dir, "Output directory")->capture_default_str();

    app.add_subcommand("selftest", "Built-in closed-form checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (app.got_subcommand("selftest")) {
            const auto failed = fracwick::run_selftest(std::cout);
            std::cout << (failed.empty() ? "selftest passed\n" : fmt::format("{} check(s) failed\n", failed.size()));
            return failed.empty() ? kExitOk : kExitGate;
        }

        fracwick::ExperimentConfig config = fracwick::load_config(config_path);
        if (app.got_subcommand("basis")) {
            fracwick::dump_basis(config, out_dir, std::cout);
            return kExitOk;
        }

        if (const auto s = env_seed()) config.seed = *s;
        if (seed) config.seed = *seed;
        if (workers > 0) config.workers = workers;

        const fracwick::RunResult result = fracwick::run_experiment(config, out_dir, std::cout);
        for (const auto& f : result.files) std::cout << "wrote " << (std::filesystem::path(out_dir) / f).string() << '\n';
        if (result.exit_code != 0) {
            std::cerr << fmt::format("{} gate(s) failed, first: {}\n", result.failures.size(), result.failures.front());
        }
        return result.exit_code == 0 ? kExitOk : kExitGate;
    } catch (const fracwick::ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitGate;
    }
}
