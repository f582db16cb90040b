// SPDX-License-Identifier: MIT
#include "fracwick/experiment.hpp"

#include "fracwick/drift.hpp"
#include "fracwick/errors.hpp"
#include "fracwick/gaussian_ensemble.hpp"
#include "fracwick/wick_core.hpp"
#include "fracwick/wz_solver.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace fracwick {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ parsing

namespace {

/// Typed access to one JSON object with field paths in every error.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }
    const json& at(const std::string& key) const {
        if (!j_.contains(key)) throw ConfigError(field(key), "missing");
        return j_.at(key);
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [key, value] : j_.items()) {
            bool known = false;
            for (const char* k : keys) known = known || key == k;
            if (!known) throw ConfigError(field(key), "unknown field");
        }
    }

    double real(const std::string& key, std::optional<double> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(field(key), "missing");
        }
        return as_real(j_.at(key), field(key));
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(field(key), "missing");
        }
        return as_count(j_.at(key), field(key));
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_boolean()) throw ConfigError(field(key), "expected true or false");
        return j_.at(key).get<bool>();
    }

    std::string text(const std::string& key, std::optional<std::string> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(field(key), "missing");
        }
        if (!j_.at(key).is_string()) throw ConfigError(field(key), "expected a string");
        return j_.at(key).get<std::string>();
    }

    static double as_real(const json& v, const std::string& where) {
        if (!v.is_number()) throw ConfigError(where, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(where, "not finite");
        return x;
    }

    static std::size_t as_count(const json& v, const std::string& where) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw ConfigError(where, "expected a non-negative integer");
        }
        return v.get<std::size_t>();
    }

private:
    const json& j_;
    std::string path_;
};

std::vector<std::size_t> count_list(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where, "expected a non-empty list of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Reader::as_count(v[i], fmt::format("{}[{}]", where, i)));
    return out;
}

std::vector<double> real_list(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where, "expected a non-empty list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Reader::as_real(v[i], fmt::format("{}[{}]", where, i)));
    return out;
}

bool on_grid(double t, double horizon, std::size_t cells) {
    const double x = t / horizon * static_cast<double>(cells);
    return std::abs(x - std::round(x)) <= 1e-9 && t >= 0.0 && t <= horizon * (1.0 + 1e-12);
}

void parse_problem(const Reader& r, ExperimentConfig& cfg) {
    r.allow({"dimension", "drift", "sigma", "c", "hurst", "horizon"});
    cfg.c = real_list(r.at("c"), r.field("c"));
    const std::size_t d = r.count("dimension", cfg.c.size());
    if (d == 0) throw ConfigError(r.field("dimension"), "must be at least 1");
    if (d != cfg.c.size()) throw ConfigError(r.field("c"), fmt::format("has {} entries for dimension {}", cfg.c.size(), d));

    const Reader drift(r.at("drift"), r.field("drift"));
    drift.allow({"id", "params"});
    cfg.drift_id = drift.text("id");
    const auto registry = drift_registry();
    if (std::find(registry.begin(), registry.end(), cfg.drift_id) == registry.end()) {
        throw ConfigError(drift.field("id"), fmt::format("'{}' is not a registered drift", cfg.drift_id));
    }
    cfg.drift_params.clear();
    if (drift.has("params")) {
        const Reader params(drift.at("params"), drift.field("params"));
        for (const auto& [key, value] : drift.at("params").items()) cfg.drift_params[key] = params.real(key);
    }
    try {
        (void)make_drift(cfg.drift_id, cfg.drift_params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(drift.field("params"), e.what());
    }

    const json& sigma = r.at("sigma");
    if (!sigma.is_array() || sigma.size() != d) {
        throw ConfigError(r.field("sigma"), fmt::format("expected one entry per component ({})", d));
    }
    cfg.sigma.clear();
    for (std::size_t i = 0; i < d; ++i) {
        const std::string where = fmt::format("{}[{}]", r.field("sigma"), i);
        if (sigma[i].is_number()) {
            cfg.sigma.push_back({Reader::as_real(sigma[i], where)});
        } else {
            cfg.sigma.push_back(real_list(sigma[i], where));
        }
    }
    cfg.hurst = r.real("hurst");
    if (!(cfg.hurst > 0.5 && cfg.hurst < 1.0)) throw ConfigError(r.field("hurst"), "must lie in (0.5, 1)");
    cfg.horizon = r.real("horizon", 1.0);
    if (!(cfg.horizon > 0.0)) throw ConfigError(r.field("horizon"), "must be positive");
}

void parse_discretization(const Reader& r, ExperimentConfig& cfg) {
    r.allow({"M", "N", "K", "seed_family", "dyadic_cells"});
    cfg.cells = r.count("M");
    cfg.steps = r.count("N");
    if (cfg.cells == 0) throw ConfigError(r.field("M"), "must be at least 1");
    if (cfg.steps == 0) throw ConfigError(r.field("N"), "must be at least 1");
    if (cfg.cells % cfg.steps != 0) throw ConfigError(r.field("N"), "must divide M so solver nodes lie on the grid");
    cfg.ladder = count_list(r.at("K"), r.field("K"));
    for (std::size_t j = 0; j < cfg.ladder.size(); ++j) {
        const std::string where = fmt::format("{}[{}]", r.field("K"), j);
        if (cfg.ladder[j] == 0) throw ConfigError(where, "must be at least 1");
        if (cfg.ladder[j] > cfg.cells) throw ConfigError(where, "must not exceed M");
        if (j > 0 && cfg.ladder[j] <= cfg.ladder[j - 1]) throw ConfigError(where, "ladder must be strictly increasing");
    }
    try {
        cfg.family = parse_seed_family(r.text("seed_family", std::string("dyadic")));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(r.field("seed_family"), e.what());
    }
    cfg.dyadic_cells = r.count("dyadic_cells", cfg.steps);
    if (cfg.family == SeedFamily::dyadic) {
        if (cfg.dyadic_cells == 0 || cfg.cells % cfg.dyadic_cells != 0) {
            throw ConfigError(r.field("dyadic_cells"), "must divide M");
        }
    }
    for (auto& s : cfg.sigma) {
        if (s.size() != 1 && s.size() != cfg.cells) {
            throw ConfigError("problem.sigma", fmt::format("each entry needs 1 or M = {} values", cfg.cells));
        }
    }
}

void parse_sampling(const Reader& r, ExperimentConfig& cfg) {
    r.allow({"n", "seed", "workers"});
    cfg.n = r.count("n");
    if (cfg.n < 100) throw ConfigError(r.field("n"), "must be at least 100");
    if (r.has("seed")) {
        const json& s = r.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
            throw ConfigError(r.field("seed"), "expected a non-negative 64-bit integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    cfg.workers = static_cast<unsigned>(std::max<std::size_t>(1, r.count("workers", 1)));
}

TestFunctionSpec parse_test_function(const Reader& r, double horizon) {
    TestFunctionSpec t;
    t.name = r.text("name");
    if (t.name.empty() || t.name.find_first_of(",\"\n") != std::string::npos) {
        throw ConfigError(r.field("name"), "must be non-empty without commas, quotes or newlines");
    }
    t.kind = r.text("kind", std::string("bump"));
    if (t.kind == "bump") {
        r.allow({"name", "kind", "t0", "t_width", "x0", "x_width"});
        t.t0 = r.real("t0");
        t.t_width = r.real("t_width");
        t.x0 = r.real("x0");
        t.x_width = r.real("x_width");
        if (!(t.t_width > 0.0) || !(t.x_width > 0.0)) throw ConfigError(r.field("t_width"), "widths must be positive");
        if (!(t.t0 - t.t_width > 0.0) || !(t.t0 + t.t_width < horizon)) {
            throw ConfigError(r.field("t0"), "time support must lie strictly inside (0, T)");
        }
    } else if (t.kind == "constant") {
        r.allow({"name", "kind", "value"});
        t.value = r.real("value", 1.0);
    } else {
        throw ConfigError(r.field("kind"), "expected 'bump' or 'constant'");
    }
    return t;
}

void parse_analyses(const Reader& r, ExperimentConfig& cfg) {
    r.allow({"convergence", "gronwall", "bound", "fokker_planck"});
    cfg.convergence = r.flag("convergence", true);
    cfg.gronwall = r.flag("gronwall", true);
    if (cfg.gronwall && !cfg.convergence) throw ConfigError(r.field("gronwall"), "needs the convergence run");

    if (r.has("bound")) {
        const Reader b(r.at("bound"), r.field("bound"));
        b.allow({"enabled", "exponents", "K", "intervals", "n"});
        cfg.bound.enabled = b.flag("enabled", true);
        cfg.bound.exponents.clear();
        const json& ex = b.at("exponents");
        if (!ex.is_array() || ex.empty()) throw ConfigError(b.field("exponents"), "expected a list of [p, p1, p2]");
        for (std::size_t q = 0; q < ex.size(); ++q) {
            const std::string where = fmt::format("{}[{}]", b.field("exponents"), q);
            const auto v = real_list(ex[q], where);
            if (v.size() != 3) throw ConfigError(where, "expected [p, p1, p2]");
            try {
                check_holder_exponents(v[0], v[1], v[2]);
            } catch (const ConfigError& e) {
                throw ConfigError(where, e.what());
            }
            cfg.bound.exponents.push_back({v[0], v[1], v[2]});
        }
        cfg.bound.ks = count_list(b.at("K"), b.field("K"));
        for (std::size_t q = 0; q < cfg.bound.ks.size(); ++q) {
            if (cfg.bound.ks[q] == 0 || cfg.bound.ks[q] > cfg.cells) {
                throw ConfigError(fmt::format("{}[{}]", b.field("K"), q), "must lie in 1..M");
            }
        }
        const json& iv = b.at("intervals");
        if (!iv.is_array() || iv.empty()) throw ConfigError(b.field("intervals"), "expected a list of [s, t]");
        cfg.bound.intervals.clear();
        for (std::size_t q = 0; q < iv.size(); ++q) {
            const std::string where = fmt::format("{}[{}]", b.field("intervals"), q);
            const auto v = real_list(iv[q], where);
            if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(where, "expected [s, t] with s < t");
            if (!on_grid(v[0], cfg.horizon, cfg.cells) || !on_grid(v[1], cfg.horizon, cfg.cells)) {
                throw ConfigError(where, "s and t must be points of the M-cell grid");
            }
            cfg.bound.intervals.emplace_back(v[0], v[1]);
        }
        cfg.bound.n = b.count("n", cfg.n);
        if (cfg.bound.n < 100) throw ConfigError(b.field("n"), "must be at least 100");
    }

    if (r.has("fokker_planck")) {
        const Reader f(r.at("fokker_planck"), r.field("fokker_planck"));
        f.allow({"enabled", "K", "N", "n", "bins", "test_functions"});
        cfg.fp.enabled = f.flag("enabled", true);
        cfg.fp.k = f.count("K", 4);
        if (cfg.fp.k == 0 || cfg.fp.k > cfg.cells) throw ConfigError(f.field("K"), "must lie in 1..M");
        cfg.fp.steps = f.count("N", cfg.steps);
        if (cfg.fp.steps == 0 || cfg.cells % cfg.fp.steps != 0) throw ConfigError(f.field("N"), "must divide M");
        cfg.fp.n = f.count("n", cfg.n);
        if (cfg.fp.n < 100) throw ConfigError(f.field("n"), "must be at least 100");
        cfg.fp.bins = f.count("bins", 100);
        if (cfg.fp.bins < 10) throw ConfigError(f.field("bins"), "must be at least 10");
        if (cfg.fp.n / cfg.fp.bins < kMinSamplesPerBin) {
            throw ConfigError(f.field("bins"), fmt::format("fewer than {} draws per bin", kMinSamplesPerBin));
        }
        const json& tf = f.at("test_functions");
        if (!tf.is_array() || tf.empty()) throw ConfigError(f.field("test_functions"), "expected a non-empty list");
        cfg.fp.tests.clear();
        for (std::size_t q = 0; q < tf.size(); ++q) {
            cfg.fp.tests.push_back(
                parse_test_function(Reader(tf[q], fmt::format("{}[{}]", f.field("test_functions"), q)), cfg.horizon));
        }
        if (cfg.fp.enabled && cfg.dimension() != 1) throw ConfigError(f.field("enabled"), "requires dimension 1");
        if (cfg.fp.enabled && !make_drift(cfg.drift_id, cfg.drift_params).differentiable()) {
            throw ConfigError(f.field("enabled"), "requires a differentiable drift");
        }
    }
    if (cfg.convergence && cfg.dimension() > 1 && !make_drift(cfg.drift_id, cfg.drift_params).decoupled) {
        throw ConfigError(r.field("convergence"), "requires dimension 1 or a decoupled drift");
    }
}

}  // namespace

TestFunction TestFunctionSpec::build() const {
    if (kind == "constant") return constant_test_function(name, value);
    return bump_test_function(name, t0, t_width, x0, x_width);
}

std::size_t ExperimentConfig::basis_size() const {
    std::size_t k = ladder.empty() ? 1 : ladder.back();
    if (bound.enabled) {
        for (std::size_t b : bound.ks) k = std::max(k, b);
    }
    if (fp.enabled) k = std::max(k, fp.k);
    return k;
}

ExperimentConfig parse_config(const json& j) {
    const Reader root(j, "");
    root.allow({"schema_version", "problem", "discretization", "sampling", "analyses"});
    if (root.count("schema_version") != static_cast<std::size_t>(kSchemaVersion)) {
        throw ConfigError("schema_version", fmt::format("expected {}", kSchemaVersion));
    }
    ExperimentConfig cfg;
    parse_problem(Reader(root.at("problem"), "problem"), cfg);
    parse_discretization(Reader(root.at("discretization"), "discretization"), cfg);
    parse_sampling(Reader(root.at("sampling"), "sampling"), cfg);
    if (root.has("analyses")) parse_analyses(Reader(root.at("analyses"), "analyses"), cfg);
    if (cfg.basis_size() > cfg.cells) throw ConfigError("discretization.M", "smaller than the largest K");
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", fmt::format("cannot open '{}'", path.string()));
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", fmt::format("invalid JSON: {}", e.what()));
    }
    return parse_config(j);
}

json ExperimentConfig::canonical() const {
    json j = to_json();
    j["sampling"].erase("seed");
    j["sampling"].erase("workers");
    return j;
}

json ExperimentConfig::to_json() const {
    json sig = json::array();
    for (const auto& s : sigma) sig.push_back(s.size() == 1 ? json(s[0]) : json(s));
    json problem = {{"dimension", dimension()},
                    {"drift", {{"id", drift_id}, {"params", drift_params}}},
                    {"sigma", sig},
                    {"c", c},
                    {"hurst", hurst},
                    {"horizon", horizon}};
    json disc = {{"M", cells}, {"N", steps}, {"K", ladder}, {"seed_family", to_string(family)}};
    if (family == SeedFamily::dyadic) disc["dyadic_cells"] = dyadic_cells;
    json analyses = {{"convergence", convergence}, {"gronwall", gronwall}};
    if (bound.enabled) {
        json ex = json::array();
        for (const auto& e : bound.exponents) ex.push_back({e[0], e[1], e[2]});
        json iv = json::array();
        for (const auto& [s, t] : bound.intervals) iv.push_back({s, t});
        analyses["bound"] = {{"enabled", true}, {"exponents", ex}, {"K", bound.ks}, {"intervals", iv}, {"n", bound.n}};
    }
    if (fp.enabled) {
        json tests = json::array();
        for (const auto& t : fp.tests) {
            if (t.kind == "constant") {
                tests.push_back({{"name", t.name}, {"kind", t.kind}, {"value", t.value}});
            } else {
                tests.push_back({{"name", t.name},
                                 {"kind", t.kind},
                                 {"t0", t.t0},
                                 {"t_width", t.t_width},
                                 {"x0", t.x0},
                                 {"x_width", t.x_width}});
            }
        }
        analyses["fokker_planck"] = {{"enabled", true}, {"K", fp.k},     {"N", fp.steps},
                                     {"n", fp.n},       {"bins", fp.bins}, {"test_functions", tests}};
    }
    return {{"schema_version", kSchemaVersion},
            {"problem", problem},
            {"discretization", disc},
            {"sampling", {{"n", n}, {"seed", seed}, {"workers", workers}}},
            {"analyses", analyses}};
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string text = config.canonical().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

ModelSetup build_setup(const ExperimentConfig& config, std::size_t steps) {
    auto grid = make_uniform_grid(config.horizon, config.cells);
    const Hurst h(config.hurst);
    std::vector<StepFunction> sigma;
    for (const auto& s : config.sigma) {
        sigma.push_back(s.size() == 1 ? StepFunction::constant(grid, s[0]) : StepFunction(grid, s));
    }
    ProblemSpec spec{make_drift(config.drift_id, config.drift_params), std::move(sigma), config.c, h, config.horizon};
    spec.validate();
    auto gram = std::make_shared<const PhiGram>(grid, h);
    const std::size_t k = config.basis_size();
    auto seeds = make_seed_family(config.family, grid, k, config.dyadic_cells);
    auto basis = std::make_shared<const PhiBasis>(gram_schmidt(gram, seeds, k));
    return ModelSetup{std::move(spec), std::move(gram), std::move(basis), SolverGrid(config.horizon, steps)};
}

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

// ---------------------------------------------------------------- running

namespace {

class CsvFile {
public:
    CsvFile(const fs::path& path, const std::string& hash, const std::string& header) : out_(path) {
        if (!out_) throw Error(fmt::format("cannot write '{}'", path.string()));
        out_ << "# config_hash=" << hash << '\n' << header << '\n';
    }

    template <class... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double v) { return format_real(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }

    std::ofstream out_;
};

std::string utc_timestamp() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                    std::chrono::system_clock::now())));
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    RunResult result;
    fs::create_directories(out_dir);
    const std::string hash = config_hash(config);

    std::vector<std::string> planned;
    if (config.convergence) planned.push_back("convergence.csv");
    if (config.convergence && config.gronwall) planned.push_back("gronwall.csv");
    if (config.bound.enabled) planned.push_back("bound.csv");
    if (config.fp.enabled) planned.push_back("fp.csv");
    {
        json manifest = {{"config_hash", hash},
                         {"version", kVersion},
                         {"timestamp", utc_timestamp()},
                         {"seed", config.seed},
                         {"workers", config.workers},
                         {"outputs", planned},
                         {"config", config.to_json()}};
        std::ofstream m(out_dir / "manifest.json");
        m << manifest.dump(2) << '\n';
    }
    result.files.push_back("manifest.json");

    auto fail = [&](std::string what) {
        log << "FAIL " << what << '\n';
        result.failures.push_back(std::move(what));
    };

    const ModelSetup setup = build_setup(config, config.steps);
    log << fmt::format("config {} seed {} workers {}\n", hash, config.seed, config.workers);

    if (config.convergence) {
        const ConvergenceReport rep =
            l1_convergence(setup, config.ladder, config.n, config.seed, config.workers, config.gronwall);
        CsvFile csv(out_dir / "convergence.csv", hash, "K,l1_error,std_err,n,sigma_defect_phi");
        for (const auto& r : rep.rows) csv.row(r.k, r.l1_error, r.std_err, r.n, r.sigma_defect_phi);
        result.files.push_back("convergence.csv");
        for (std::size_t j = 1; j < rep.rows.size(); ++j) {
            if (rep.rows[j].l1_error > rep.rows[j - 1].l1_error + 2.0 * rep.step_std_err[j] + 1e-12) {
                fail(fmt::format("convergence.csv K={}: error {} exceeds rung K={} by more than 2 SE",
                                 rep.rows[j].k, format_real(rep.rows[j].l1_error), rep.rows[j - 1].k));
            }
        }
        for (const auto& r : rep.rows) {
            log << fmt::format("K={:>4} l1={:.6g} se={:.3g} defect={:.3g}\n", r.k, r.l1_error, r.std_err,
                               r.sigma_defect_phi);
        }
        if (config.gronwall) {
            CsvFile g(out_dir / "gronwall.csv", hash, "t,estimate,envelope,pass");
            for (const auto& r : rep.gronwall) {
                g.row(r.t, r.estimate, r.envelope, r.pass);
                if (!r.pass) fail(fmt::format("gronwall.csv t={}", format_real(r.t)));
            }
            result.files.push_back("gronwall.csv");
        }
    }

    if (config.bound.enabled) {
        CsvFile csv(out_dir / "bound.csv", hash, "p,p1,p2,K,s,t,lhs,lhs_ci,C,rhs,ratio,pass");
        for (std::size_t i = 0; i < setup.spec.dimension(); ++i) {
            for (const auto& ex : config.bound.exponents) {
                for (std::size_t k : config.bound.ks) {
                    for (const auto& [s, t] : config.bound.intervals) {
                        const BoundCheckRecord r = appendix_bound_check(setup, i, s, t, ex[0], ex[1], ex[2], k,
                                                                        config.bound.n, config.seed, config.workers);
                        csv.row(r.p, r.p1, r.p2, r.k, r.s, r.t, r.lhs, r.lhs_ci, r.c, r.rhs, r.ratio, r.pass);
                        if (!r.pass) {
                            fail(fmt::format("bound.csv component={} p={} K={} s={} t={}", i, r.p, r.k,
                                             format_real(s), format_real(t)));
                        }
                    }
                }
            }
        }
        result.files.push_back("bound.csv");
    }

    if (config.fp.enabled) {
        const ModelSetup fp_setup = config.fp.steps == config.steps ? setup : build_setup(config, config.fp.steps);
        std::vector<TestFunction> tests;
        for (const auto& t : config.fp.tests) tests.push_back(t.build());
        const FokkerPlanckReport rep = fokker_planck_residual(fp_setup, config.fp.k, tests, config.fp.n,
                                                              config.fp.bins, config.seed, config.workers);
        CsvFile csv(out_dir / "fp.csv", hash, "testfn,residual,std_err,bins,pass");
        for (const auto& r : rep.residuals) {
            csv.row(r.testfn, r.residual, r.std_err, r.bins, r.pass);
            if (!r.pass) fail(fmt::format("fp.csv testfn={}", r.testfn));
        }
        result.files.push_back("fp.csv");
        for (const auto& s : rep.stein) {
            log << fmt::format("stein {}: {:.3g} (se {:.3g})\n", s.name, s.mean, s.std_err);
            if (!s.pass) fail(fmt::format("stein check '{}'", s.name));
        }
        for (const auto& b : rep.bin_checks) {
            if (!b.pass) fail(fmt::format("conditional-expectation bin node={} k={} bin={}", b.node, b.k, b.bin));
        }
    }

    result.exit_code = result.failures.empty() ? 0 : 1;
    return result;
}

void dump_basis(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    fs::create_directories(out_dir);
    const ModelSetup setup = build_setup(config, config.steps);
    const PhiBasis& basis = *setup.basis;
    {
        std::ofstream out(out_dir / "basis.csv");
        write_basis_csv(out, basis);
    }
    const double t = config.horizon;
    log << fmt::format("basis: family={} K={} M={} H={}\n", to_string(config.family), basis.size(), config.cells,
                       config.hurst);
    log << fmt::format("orthonormality defect: {:.3e}\n", basis.orthonormality_defect());
    const Eigen::MatrixXd& g = setup.gram->entries();
    log << fmt::format("Gram diagonal: min {:.6g} max {:.6g}\n", g.diagonal().minCoeff(), g.diagonal().maxCoeff());
    log << "K, Cameron-Martin defect at (T,T)\n";
    for (std::size_t k = 1; k <= basis.size(); ++k) {
        log << fmt::format("{}, {:.6e}\n", k, fbm_covariance(t, t, setup.spec.hurst) -
                                                  cm_partial_sum_covariance(basis, t, t, k));
    }
    log << fmt::format("wrote {}\n", (out_dir / "basis.csv").string());
}

// ---------------------------------------------------------------- selftest

std::vector<std::string> run_selftest(std::ostream& log) {
    std::vector<std::string> failed;
    auto check = [&](const std::string& name, bool ok) {
        log << (ok ? "ok   " : "FAIL ") << name << '\n';
        if (!ok) failed.push_back(name);
    };
    auto close = [](double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); };
    auto guarded = [&](const std::string& name, auto&& body) {
        try {
            check(name, body());
        } catch (const std::exception& e) {
            log << "     " << e.what() << '\n';
            check(name, false);
        }
    };

    const Hurst h(0.75);
    auto grid2 = make_uniform_grid(2.0, 2);
    auto grid = make_uniform_grid(1.0, 16);
    auto gram = std::make_shared<const PhiGram>(grid, h);

    guarded("phi_kernel(0,1,0.75) = 0.375", [&] { return close(phi_kernel(0, 1, h), 0.375, 1e-15); });
    guarded("rect_inner(0,2,0,2) = 2^1.5", [&] { return close(rect_inner(0, 2, 0, 2, h), std::pow(2.0, 1.5), 1e-14); });
    guarded("rect_inner(0,1,0,1) = 1", [&] { return close(rect_inner(0, 1, 0, 1, h), 1.0, 1e-15); });
    guarded("inner_phi(chi, chi) = 1", [&] {
        const auto chi = StepFunction::indicator(grid, 0, 1);
        return close(inner_phi(chi, chi, *gram), 1.0, 1e-13);
    });
    guarded("inner_phi(f, 0) = 0", [&] {
        return inner_phi(StepFunction::constant(grid, 0.3), StepFunction::zero(grid), *gram) == 0.0;
    });
    guarded("phi_transform(0) = 0", [&] { return phi_transform(StepFunction::zero(grid), 0.4, h) == 0.0; });

    const auto legendre = make_seed_family(SeedFamily::legendre, grid, 4);
    guarded("Gram-Schmidt orthogonality", [&] {
        return gram_schmidt(gram, legendre, 4).orthonormality_defect() <= kOrthonormalityTolerance;
    });
    guarded("basis-only frame has identity covariance", [&] {
        const PhiBasis b = gram_schmidt(gram, legendre, 4);
        GaussianFrame f{{b.vectors()}};
        const CovarianceModel m = build_covariance(f, *gram);
        return (m.matrix() - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10 && m.jitter_used() == 0.0;
    });
    guarded("independent components have zero cross covariance", [&] {
        GaussianFrame f{{{StepFunction::indicator(grid, 0, 0.5)}, {StepFunction::indicator(grid, 0, 0.5)}}};
        return build_covariance(f, *gram).matrix()(0, 1) == 0.0;
    });
    guarded("zero frame draws zero", [&] {
        GaussianFrame f{{{StepFunction::zero(grid)}}};
        return sample(build_covariance(f, *gram), 1, 3).draw(0)[0] == 0.0;
    });
    guarded("frame {chi_[0,1], chi_[1,2]} covariance", [&] {
        auto g2 = std::make_shared<const PhiGram>(grid2, h);
        GaussianFrame f{{{StepFunction::indicator(grid2, 0, 1), StepFunction::indicator(grid2, 1, 2)}}};
        return close(build_covariance(f, *g2).matrix()(0, 1), 0.5 * (std::pow(2.0, 1.5) - 2.0), 1e-13);
    });
    guarded("Cameron-Martin partial sum at K=0 is 0 and obeys Bessel", [&] {
        const PhiBasis b = gram_schmidt(gram, legendre, 4);
        return cm_partial_sum_covariance(b, 1, 1, 0) == 0.0 && cm_partial_sum_covariance(b, 1, 1, 4) <= 1.0 + 1e-12;
    });

    auto full = std::make_shared<const PhiGram>(grid, Hurst(0.7));
    const PhiBasis dyadic = gram_schmidt(full, make_seed_family(SeedFamily::dyadic, grid, 16, 16), 16);
    const SolverGrid sgrid(1.0, 16);
    guarded("Sigma vanishes for sigma = 0", [&] {
        SigmaCoeffs sc(dyadic, {StepFunction::zero(grid)}, sgrid.nodes());
        return sc.cumulative(0).cwiseAbs().maxCoeff() == 0.0;
    });
    guarded("projection norm vanishes for r = t", [&] {
        SigmaCoeffs sc(dyadic, {StepFunction::constant(grid, 0.5)}, sgrid.nodes());
        return projection_norm_sq(sc, 0, 5, 5, 16) == 0.0;
    });
    guarded("stochastic exponential of sigma = 0 is 1", [&] {
        const std::vector<double> z{0.3, -1.2}, s{0.0, 0.0};
        return wick_exponential(z, s, 0.0).value == 1.0;
    });
    guarded("translation by 0 is 0", [&] {
        return translation_shift(StepFunction::constant(grid, 1.0), StepFunction::zero(grid), *full) == 0.0;
    });
    guarded("Gjessing shift of e_k is -Sigma_k", [&] {
        SigmaCoeffs sc(dyadic, {StepFunction::constant(grid, 0.5)}, sgrid.nodes());
        const StepFunction proj = sc.projection(0, 3, 11, 16);
        double worst = 0.0;
        for (std::size_t k = 0; k < 16; ++k) {
            worst = std::max(worst, std::abs(translation_shift(dyadic.vector(k), proj, *full) + sc.value(0, k, 3, 11)));
        }
        return worst <= 1e-12;
    });
    guarded("Gronwall envelope examples", [&] {
        ProblemSpec a{make_drift("zero"), {StepFunction::zero(grid)}, {0.0}, Hurst(0.7), 1.0};
        ProblemSpec b{make_drift("sin"), {StepFunction::zero(grid)}, {1.0}, Hurst(0.7), 1.0};
        ProblemSpec c{make_drift("sin", {{"amplitude", 2.0}}), {StepFunction::zero(grid), StepFunction::zero(grid)},
                      {1.0, 1.0}, Hurst(0.7), 1.0};
        return gronwall_envelope(a, 1.0) == 0.0 && gronwall_envelope(b, 1.0) == 4.0 && gronwall_envelope(c, 0.5) == 8.0;
    });

    const StepFunction half = StepFunction::constant(grid, 0.5);
    auto coeffs = std::make_shared<const SigmaCoeffs>(dyadic, std::vector<StepFunction>{half}, sgrid.nodes());
    guarded("zero drift equals c E^K(0,t)", [&] {
        ProblemSpec spec{make_drift("zero"), {half}, {1.5}, Hurst(0.7), 1.0};
        const std::vector<double> z{0.4, -0.9, 1.1};
        const PathSolution x = solve_truncated(spec, coeffs, 3, sgrid, z);
        double worst = 0.0;
        for (std::size_t n = 0; n <= 16; ++n) {
            const double e = wick_exponential(z, coeffs->shifts(0, 0, n, 3), projection_norm_sq(*coeffs, 0, 0, n, 3)).value;
            worst = std::max(worst, std::abs(x.at(n, 0) - 1.5 * e) / (1.5 * e));
        }
        return worst <= 1e-14;
    });
    guarded("sigma = 0 reproduces explicit Euler", [&] {
        auto zc = std::make_shared<const SigmaCoeffs>(dyadic, std::vector<StepFunction>{StepFunction::zero(grid)},
                                                      sgrid.nodes());
        ProblemSpec spec{make_drift("sin"), {StepFunction::zero(grid)}, {0.7}, Hurst(0.7), 1.0};
        const std::vector<double> z{0.4, -0.9};
        const PathSolution x = solve_truncated(spec, zc, 2, sgrid, z);
        double e = 0.7, worst = 0.0;
        for (std::size_t n = 1; n <= 16; ++n) {
            e = e + sgrid.delta() * std::sin(e);
            worst = std::max(worst, std::abs(x.at(n, 0) - e) / std::abs(e));
        }
        return worst <= 1e-14;
    });
    guarded("zero-drift sensitivities are Sigma_k(0,t) X(t)", [&] {
        ProblemSpec spec{make_drift("zero"), {half}, {1.5}, Hurst(0.7), 1.0};
        const std::vector<double> z{0.4, -0.9, 1.1};
        const Sensitivities s = forward_sensitivities(spec, coeffs, 3, sgrid, z);
        const PathSolution x = solve_truncated(spec, coeffs, 3, sgrid, z);
        double worst = 0.0;
        for (std::size_t n = 0; n <= 16; ++n) {
            for (std::size_t k = 0; k < 3; ++k) {
                worst = std::max(worst, std::abs(s(n, 0, k) - coeffs->value(0, k, 0, n) * x.at(n, 0)));
            }
        }
        return worst <= 1e-13;
    });
    guarded("exact-projection equivalence over 20 seeds", [&] {
        ProblemSpec spec{make_drift("sin"), {half}, {1.0}, Hurst(0.7), 1.0};
        ModelSetup setup{spec, full, std::make_shared<const PhiBasis>(dyadic), sgrid};
        const std::vector<std::size_t> ladder{16};
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            worst = std::max(worst, l1_convergence(setup, ladder, 100, seed, 1, false).rows[0].l1_error);
        }
        return worst <= 1e-8;
    });
    guarded("moment bound with sigma = 0 has lhs = rhs = 0", [&] {
        ProblemSpec spec{make_drift("sin"), {StepFunction::zero(grid)}, {1.0}, Hurst(0.7), 1.0};
        ModelSetup setup{spec, full, std::make_shared<const PhiBasis>(dyadic), sgrid};
        const BoundCheckRecord r = appendix_bound_check(setup, 0, 0.25, 0.75, 1, 2, 2, 2, 200, 5);
        return r.lhs == 0.0 && r.rhs == 0.0 && r.pass;
    });
    guarded("constant test function has zero residual", [&] {
        ProblemSpec spec{make_drift("sin"), {half}, {1.0}, Hurst(0.7), 1.0};
        ModelSetup setup{spec, full, std::make_shared<const PhiBasis>(dyadic), sgrid};
        const std::vector<TestFunction> tf{constant_test_function("flat", 2.0)};
        return fokker_planck_residual(setup, 2, tf, 1000, 10, 9).residuals[0].residual == 0.0;
    });
    guarded("Z-coordinate means within 4/sqrt(n) of 0", [&] {
        const PhiBasis b = gram_schmidt(gram, legendre, 2);
        const SampleBatch batch = sample(build_covariance(GaussianFrame{{b.vectors()}}, *gram), 100000, 11);
        double worst = 0.0;
        for (std::size_t q = 0; q < 2; ++q) {
            double sum = 0.0;
            for (std::size_t j = 0; j < batch.count; ++j) sum += batch.draw(j)[q];
            worst = std::max(worst, std::abs(sum / 1e5));
        }
        return worst <= 4.0 / std::sqrt(1e5);
    });
    guarded("stochastic exponential has mean 1 within 4 SE", [&] {
        const PhiBasis b = gram_schmidt(gram, legendre, 3);
        const SampleBatch batch = sample(build_covariance(GaussianFrame{{b.vectors()}}, *gram), 100000, 12);
        const std::vector<double> shifts{0.4, -0.3, 0.2};
        std::vector<double> values(batch.count);
        for (std::size_t j = 0; j < batch.count; ++j) values[j] = wick_exponential(batch.draw(j), shifts, 0.29).value;
        const McEstimate e = mc_estimate(values);
        return std::abs(e.mean - 1.0) <= 4.0 * e.std_err;
    });

    auto indicator_gram = std::make_shared<const PhiGram>(grid, Hurst(0.7));
    const PhiBasis indicators =
        gram_schmidt(indicator_gram, make_seed_family(SeedFamily::indicator, grid, 16), 16);
    guarded("full basis reproduces chi sigma exactly", [&] {
        SigmaCoeffs sc(indicators, {half}, sgrid.nodes());
        double worst = 0.0;
        for (std::size_t r = 0; r < 16; ++r) {
            for (std::size_t t = r + 1; t <= 16; ++t) {
                const double v = 0.25 * rect_inner(sgrid.node(r), sgrid.node(t), sgrid.node(r), sgrid.node(t), Hurst(0.7));
                worst = std::max(worst, std::abs(v - projection_norm_sq(sc, 0, r, t, 16)));
            }
        }
        return worst <= 1e-10;
    });
    guarded("reference solver with zero drift is c E(0,t)", [&] {
        ProblemSpec spec{make_drift("zero"), {half}, {1.5}, Hurst(0.7), 1.0};
        std::vector<double> g(16);
        for (std::size_t m = 0; m < 16; ++m) g[m] = 0.05 * std::sin(1.0 + static_cast<double>(m));
        const PathSolution x = solve_reference(spec, *full, sgrid, g);
        double worst = 0.0, sum = 0.0;
        for (std::size_t n = 1; n <= 16; ++n) {
            sum += g[n - 1];
            const double v = 0.25 * std::pow(sgrid.node(n), 1.4);
            const double e = 1.5 * std::exp(sum - 0.5 * v);
            worst = std::max(worst, std::abs(x.at(n, 0) - e) / e);
        }
        return worst <= 1e-13 && x.at(0, 0) == 1.5;
    });
    guarded("reference solver with sigma = 0 matches truncated", [&] {
        const StepFunction zero = StepFunction::zero(grid);
        auto zc = std::make_shared<const SigmaCoeffs>(dyadic, std::vector<StepFunction>{zero}, sgrid.nodes());
        ProblemSpec spec{make_drift("tanh"), {zero}, {0.3}, Hurst(0.7), 1.0};
        const std::vector<double> z{1.0, 2.0}, g(16, 0.0);
        const PathSolution a = solve_truncated(spec, zc, 2, sgrid, z);
        const PathSolution b = solve_reference(spec, *full, sgrid, g);
        return (a.values - b.values).cwiseAbs().maxCoeff() <= 1e-14;
    });
    guarded("sensitivities vanish for sigma = 0", [&] {
        const StepFunction zero = StepFunction::zero(grid);
        auto zc = std::make_shared<const SigmaCoeffs>(dyadic, std::vector<StepFunction>{zero}, sgrid.nodes());
        ProblemSpec spec{make_drift("sin"), {zero}, {0.3}, Hurst(0.7), 1.0};
        const std::vector<double> z{1.0, 2.0, -0.5};
        const Sensitivities s = forward_sensitivities(spec, zc, 3, sgrid, z);
        for (std::size_t n = 0; n <= 16; ++n) {
            for (std::size_t k = 0; k < 3; ++k) {
                if (s(n, 0, k) != 0.0) return false;
            }
        }
        return true;
    });
    guarded("convergence error vanishes for sigma = 0", [&] {
        ProblemSpec spec{make_drift("sin"), {StepFunction::zero(grid)}, {1.0}, Hurst(0.7), 1.0};
        ModelSetup setup{spec, full, std::make_shared<const PhiBasis>(dyadic), sgrid};
        const std::vector<std::size_t> ladder{1, 4, 16};
        const ConvergenceReport rep = l1_convergence(setup, ladder, 200, 3, 1, true);
        return std::all_of(rep.rows.begin(), rep.rows.end(), [](const ConvergenceRow& r) { return r.l1_error == 0.0; });
    });
    guarded("moment bound with the full basis has lhs = rhs = 0", [&] {
        ProblemSpec spec{make_drift("sin"), {half}, {1.0}, Hurst(0.7), 1.0};
        ModelSetup setup{spec, indicator_gram, std::make_shared<const PhiBasis>(indicators), sgrid};
        const BoundCheckRecord r = appendix_bound_check(setup, 0, 0.1875, 0.6875, 2, 4, 4, 16, 200, 4);
        return r.lhs <= kBoundRoundoff && r.rhs <= kBoundRoundoff && r.pass;
    });
    guarded("Gronwall envelope is 0 for c = 0, M = 0", [&] {
        ProblemSpec spec{make_drift("zero"), {half}, {0.0}, Hurst(0.7), 1.0};
        return gronwall_envelope(spec, 0.8) == 0.0;
    });
    guarded("inconsistent Hoelder exponents are rejected naming p1/p2", [&] {
        json j = ExperimentConfig{}.to_json();
        j["problem"]["c"] = {1.0};
        j["problem"]["sigma"] = {0.5};
        j["problem"]["dimension"] = 1;
        j["discretization"]["K"] = {1, 2};
        j["analyses"]["bound"] = {{"exponents", {{1, 2, 3}}}, {"K", {1}}, {"intervals", {{0.0, 1.0}}}};
        try {
            (void)parse_config(j);
        } catch (const ConfigError& e) {
            return std::string(e.what()).find("p1/p2") != std::string::npos;
        }
        return false;
    });
    guarded("sigma = 0 convergence run exits 0 with a zero error column", [&] {
        ExperimentConfig cfg;
        cfg.sigma = {{0.0}};
        cfg.c = {1.0};
        cfg.cells = 16;
        cfg.steps = 8;
        cfg.dyadic_cells = 8;
        cfg.ladder = {1, 2, 8};
        cfg.n = 200;
        const fs::path dir = fs::temp_directory_path() / fmt::format("fracwick-selftest-{}", config_hash(cfg));
        std::ostringstream sink;
        const RunResult r = run_experiment(cfg, dir, sink);
        std::ifstream in(dir / "convergence.csv");
        std::string line;
        std::getline(in, line);
        std::getline(in, line);
        bool zeros = true;
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            ++rows;
            const auto a = line.find(',');
            zeros = zeros && line.substr(a + 1, line.find(',', a + 1) - a - 1) == "0";
        }
        fs::remove_all(dir);
        return r.exit_code == 0 && rows == 3 && zeros;
    });
    return failed;
}

}  // namespace fracwick
