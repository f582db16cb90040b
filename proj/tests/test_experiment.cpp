// SPDX-License-Identifier: MIT
#include "fracwick/errors.hpp"
#include "fracwick/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace fracwick;
using nlohmann::json;

namespace {

json default_json() {
    std::ifstream in(std::filesystem::path(FRACWICK_SOURCE_DIR) / "configs" / "default.json");
    REQUIRE(in.good());
    return json::parse(in);
}

std::string error_field(const json& j, std::string* message = nullptr) {
    try {
        (void)parse_config(j);
    } catch (const ConfigError& e) {
        if (message) *message = e.what();
        return e.field();
    }
    return "<none>";
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("the default config parses") {
    const ExperimentConfig cfg = parse_config(default_json());
    CHECK(cfg.dimension() == 1);
    CHECK(cfg.cells == 128);
    CHECK(cfg.steps == 16);
    CHECK(cfg.ladder == std::vector<std::size_t>{1, 2, 4, 8, 16});
    CHECK(cfg.family == SeedFamily::dyadic);
    CHECK(cfg.bound.exponents.size() == 2);
    CHECK(cfg.fp.tests.size() == 3);
}

TEST_CASE("invalid configs name the offending field") {
    json j = default_json();
    SUBCASE("hurst") {
        j["problem"]["hurst"] = 0.5;
        CHECK(error_field(j) == "problem.hurst");
        j["problem"]["hurst"] = 1.0;
        CHECK(error_field(j) == "problem.hurst");
    }
    SUBCASE("drift") {
        j["problem"]["drift"]["id"] = "cubic";
        CHECK(error_field(j) == "problem.drift.id");
    }
    SUBCASE("holder exponents") {
        j["analyses"]["bound"]["exponents"] = json::array({json::array({1, 2, 3})});
        std::string message;
        CHECK(error_field(j, &message).find("analyses.bound.exponents[0]") == 0);
        CHECK(message.find("p1/p2") != std::string::npos);
    }
    SUBCASE("unknown field") {
        j["problem"]["colour"] = "blue";
        CHECK(error_field(j) == "problem.colour");
    }
    SUBCASE("K above M") {
        j["discretization"]["K"] = json::array({1, 200});
        CHECK(error_field(j).find("discretization.K") == 0);
    }
    SUBCASE("ladder not increasing") {
        j["discretization"]["K"] = json::array({4, 2});
        CHECK(error_field(j).find("discretization.K") == 0);
    }
    SUBCASE("N not dividing M") {
        j["discretization"]["N"] = 12;
        CHECK(error_field(j) == "discretization.N");
    }
    SUBCASE("undersampled bins") {
        j["analyses"]["fokker_planck"]["n"] = 1000;
        CHECK(error_field(j).find("analyses.fokker_planck") == 0);
    }
    SUBCASE("schema version") {
        j["schema_version"] = 2;
        CHECK(error_field(j) == "schema_version");
    }
}

TEST_CASE("config hash") {
    const json base = default_json();
    const std::string h = config_hash(parse_config(base));
    CHECK(h.size() == 16);
    SUBCASE("seed and workers do not enter") {
        json j = base;
        j["sampling"]["seed"] = 7;
        j["sampling"]["workers"] = 3;
        CHECK(config_hash(parse_config(j)) == h);
    }
    SUBCASE("semantic fields do") {
        json j = base;
        j["problem"]["hurst"] = 0.71;
        CHECK(config_hash(parse_config(j)) != h);
        j = base;
        j["sampling"]["n"] = 10001;
        CHECK(config_hash(parse_config(j)) != h);
        j = base;
        j["analyses"]["bound"]["n"] = 20000;
        CHECK(config_hash(parse_config(j)) != h);
    }
    SUBCASE("serialization round trip") {
        const ExperimentConfig cfg = parse_config(base);
        const ExperimentConfig back = parse_config(cfg.to_json());
        CHECK(config_hash(back) == h);
        CHECK(back.to_json() == cfg.to_json());
    }
}

TEST_CASE("format_real keeps 17 significant digits") {
    CHECK(format_real(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("default convergence table regression") {
    json j = default_json();
    j["analyses"]["bound"]["enabled"] = false;
    j["analyses"]["fokker_planck"]["enabled"] = false;
    const ExperimentConfig cfg = parse_config(j);
    const auto dir = std::filesystem::temp_directory_path() / "fracwick_regression";
    std::filesystem::remove_all(dir);
    std::ostringstream log;
    const RunResult res = run_experiment(cfg, dir, log);
    CHECK(res.exit_code == 0);
    const auto rows = read_csv(dir / "convergence.csv");
    REQUIRE(rows.size() == 7);
    CHECK(rows[0][0] == "# config_hash=" + config_hash(cfg));
    CHECK(rows[1] == std::vector<std::string>{"K", "l1_error", "std_err", "n", "sigma_defect_phi"});

    // K, L1 error, standard error, sigma defect
    const double pinned[5][4] = {
        {1, 0.069251450742093754, 0.00075078764643983183, 0.1795335216802072},
        {2, 0.030485872114766391, 0.00033120347252732686, 0.16079573260271832},
        {4, 0.012818099846248142, 0.0001379448927924876, 0.098685322556892954},
        {8, 0.0050071344992109138, 5.4067727118176293e-05, 0.060746932094318071},
        {16, 7.9719453260906907e-15, 3.7708069140957422e-17, 5.0086352959517864e-16},
    };
    double previous = 1.0;
    for (int r = 0; r < 5; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r + 2)];
        CHECK(std::stod(row[0]) == pinned[r][0]);
        CHECK(row[3] == "10000");
        const double l1 = std::stod(row[1]);
        if (r < 4) {
            CHECK(l1 == doctest::Approx(pinned[r][1]).epsilon(1e-9));
            CHECK(std::stod(row[2]) == doctest::Approx(pinned[r][2]).epsilon(1e-9));
            CHECK(std::stod(row[4]) == doctest::Approx(pinned[r][3]).epsilon(1e-9));
        } else {
            // the exact rung is roundoff; pin its scale only
            CHECK(l1 <= 1e-12);
            CHECK(std::stod(row[4]) <= 1e-12);
        }
        CHECK(l1 <= previous);
        previous = l1;
    }
    std::filesystem::remove_all(dir);
}
