#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kslab/runner.hpp"

using namespace kslab;
namespace fs = std::filesystem;

namespace {

const std::string kSmallConfig = R"(# reduced desk scale for fast end-to-end runs
[domain]
n = 48
boundary = torus

[coefficients]
preset = torus-ou
obs_gain = 0.5

[metric]
m = 8

[solver]
dt = 2e-3
T = 0.2
paths = 60
particles = 200
initial = cos-bump

[run]
seed = 42
workers = 2
replicas = 10
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("'") + KSLAB_CLI_PATH + "' " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

} // namespace

TEST_CASE("config parses, validates and round-trips bit-exactly") {
    auto cfg = parse_config(kSmallConfig);
    CHECK(cfg.n == 48);
    CHECK(cfg.dt == 2e-3);
    CHECK(cfg.params.at("obs_gain") == 0.5);
    CHECK(cfg.seed == 42);
    validate_config(cfg);

    const std::string canon = canonical_text(cfg);
    auto reparsed = parse_config(canon);
    CHECK(canonical_text(reparsed) == canon);
    CHECK(config_hash(reparsed) == config_hash(cfg));
}

TEST_CASE("config errors carry line and field diagnostics") {
    try {
        parse_config("[solver]\ndt = banana\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("dt") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("orphan = 1\n"), ConfigError);

    auto cfg = parse_config(kSmallConfig);
    cfg.dt = -1e-3;
    try {
        validate_config(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
}

TEST_CASE("stability violations are config errors unless overridden") {
    auto cfg = parse_config(kSmallConfig);
    cfg.dt = 0.5; // far beyond the bound for this diffusion
    CHECK_THROWS_AS(make_context(cfg), ConfigError);
    cfg.override_stability = true;
    CHECK_NOTHROW(make_context(cfg)); // context builds; solvers still guard
}

TEST_CASE("terminal and initial presets resolve, unknown names fail") {
    auto cfg = parse_config(kSmallConfig);
    for (std::string name : {"constant", "first-moment", "second-moment", "cos-moment",
                             "cos-moment-square", "abs-moment", "d2sq-uniform"}) {
        cfg.phi = name;
        auto ctx = make_context(cfg);
        CHECK(std::isfinite(ctx.phi(ctx.mu0)));
        if (ctx.phi.sup_bound()) CHECK(std::abs(ctx.phi(ctx.mu0)) <= *ctx.phi.sup_bound() + 1e-12);
    }
    cfg.phi = "no-such-phi";
    CHECK_THROWS_AS(make_context(cfg), ConfigError);

    cfg.phi = "first-moment";
    cfg.initial = "bogus";
    CHECK_THROWS_AS(make_context(cfg), ConfigError);
}

TEST_CASE("verify subcommand reports pass on the default torus preset") {
    auto cfg = parse_config(kSmallConfig);
    cfg.out_dir = "cli_test_out/verify";
    auto rep = run_subcommand("verify", cfg);
    CHECK(rep.all_pass());
    CHECK(fs::exists("cli_test_out/verify/report.json"));
    bool saw_adjoint = false;
    for (const auto& c : rep.checks)
        if (c.id == "adjoint-consistency") saw_adjoint = c.pass;
    CHECK(saw_adjoint);
}

TEST_CASE("simulate writes path artifacts and passes conservation checks") {
    auto cfg = parse_config(kSmallConfig);
    cfg.out_dir = "cli_test_out/simulate";
    auto rep = run_subcommand("simulate", cfg);
    CHECK(rep.all_pass());
    CHECK(fs::exists("cli_test_out/simulate/ks_path.csv"));
    CHECK(fs::exists("cli_test_out/simulate/ks_path.json"));
    CHECK(fs::exists("cli_test_out/simulate/particle_path.csv"));
    CHECK(fs::exists("cli_test_out/simulate/filter_density.svg"));
    // seeds are logged in every artifact
    CHECK(slurp("cli_test_out/simulate/ks_path.json").find("\"seed\"") != std::string::npos);
}

TEST_CASE("solve writes the estimate JSON and an optional surface") {
    auto cfg = parse_config(kSmallConfig);
    cfg.out_dir = "cli_test_out/solve";
    RunOptions opts;
    opts.surface = true;
    auto rep = run_subcommand("solve", cfg, opts);
    CHECK(rep.all_pass());
    auto j = nlohmann::json::parse(slurp("cli_test_out/solve/solve.json"));
    CHECK(j.contains("value"));
    CHECK(j.contains("stderr"));
    CHECK(j.at("config_hash").get<std::string>() == config_hash(cfg));
    CHECK(fs::exists("cli_test_out/solve/u_surface.csv"));
    CHECK(fs::exists("cli_test_out/solve/u_surface.svg"));
}

TEST_CASE("all report lists every acceptance criterion exactly once") {
    auto cfg = parse_config(kSmallConfig);
    cfg.paths = 50;
    cfg.out_dir = "cli_test_out/all";
    auto rep = run_subcommand("all", cfg);
    std::map<std::string, int> counts;
    for (const auto& c : rep.checks) counts[c.id]++;
    for (int k = 1; k <= 10; ++k) {
        char prefix[8];
        std::snprintf(prefix, sizeof(prefix), "acc%02d-", k);
        int found = 0;
        for (const auto& [id, n] : counts)
            if (id.rfind(prefix, 0) == 0) found += n;
        CHECK(found == 1);
    }
}

TEST_CASE("cli binary: exit codes for success, config errors and reports") {
    fs::create_directories("cli_test_out/bin");
    {
        std::ofstream os("cli_test_out/bin/good.cfg");
        os << kSmallConfig;
    }
    CHECK(run_cli("verify --config cli_test_out/bin/good.cfg --out cli_test_out/bin/v") == 0);

    {
        std::ofstream os("cli_test_out/bin/bad.cfg");
        os << "[solver]\ndt = -1e-3\n";
    }
    CHECK(run_cli("solve --config cli_test_out/bin/bad.cfg --out cli_test_out/bin/b") == 2);
    CHECK(run_cli("solve --config cli_test_out/bin/missing.cfg") == 2);

    // a scenario that honestly fails a check exits 1 (report still written):
    // the pinned box loses grid ellipticity at its endpoints
    {
        std::ofstream os("cli_test_out/bin/pinned.cfg");
        os << "[domain]\nn = 32\nboundary = reflecting\n"
           << "[coefficients]\npreset = pinned-box\n"
           << "[metric]\nm = 6\n"
           << "[solver]\ndt = 1e-3\nT = 0.1\npaths = 10\nparticles = 10\n"
           << "[run]\nseed = 1\nreplicas = 2\n";
    }
    CHECK(run_cli("verify --config cli_test_out/bin/pinned.cfg --out cli_test_out/bin/p") == 1);
    CHECK(fs::exists("cli_test_out/bin/p/report.json"));
}

TEST_CASE("cli binary: fixed seed and varying workers give identical reports") {
    fs::create_directories("cli_test_out/repro");
    {
        std::ofstream os("cli_test_out/repro/cfg.cfg");
        os << kSmallConfig;
    }
    REQUIRE(run_cli("verify --config cli_test_out/repro/cfg.cfg --workers 1 --out "
                    "cli_test_out/repro/w1") == 0);
    REQUIRE(run_cli("verify --config cli_test_out/repro/cfg.cfg --workers 3 --out "
                    "cli_test_out/repro/w3") == 0);
    auto j1 = nlohmann::json::parse(slurp("cli_test_out/repro/w1/report.json"));
    auto j3 = nlohmann::json::parse(slurp("cli_test_out/repro/w3/report.json"));
    j1.erase("timing");
    j3.erase("timing");
    CHECK(j1.dump() == j3.dump());
}
