#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "kslab/runner.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    bool has_seed = false;
    unsigned long long seed = 0;
    int workers = 0;
    bool override_stability = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "experiment config file (INI sections)");
    cmd->add_option("--seed", flags.seed, "override the config seed")
        ->each([&flags](const std::string&) { flags.has_seed = true; });
    cmd->add_option("--out", flags.out_dir, "output directory for reports and artifacts");
    cmd->add_option("--workers", flags.workers, "worker thread count (outputs do not depend on it)");
    cmd->add_flag("--override-stability", flags.override_stability,
                  "run even when dt violates the explicit stability bound");
}

kslab::ExperimentConfig resolve_config(const CommonFlags& flags) {
    kslab::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = kslab::load_config_file(flags.config_path);
    if (flags.has_seed) cfg.seed = flags.seed;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (flags.workers > 0) cfg.workers = flags.workers;
    if (flags.override_stability) cfg.override_stability = true;
    return cfg;
}

int run(const std::string& name, const CommonFlags& flags, const kslab::RunOptions& opts) {
    const auto cfg = resolve_config(flags);
    const auto report = kslab::run_subcommand(name, cfg, opts);
    for (const auto& check : report.checks)
        std::printf("[%s] %s: %s\n", check.pass ? "PASS" : "FAIL", check.id.c_str(),
                    check.details.c_str());
    std::printf("report: %s (content hash %s)\n",
                (cfg.out_dir + "/report.json").c_str(), report.content_hash().c_str());
    return report.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kslab: measure-valued filtering dynamics and the backward Kolmogorov "
                 "equation on probability measures, at desk scale"};
    app.require_subcommand(1);

    CommonFlags flags;
    kslab::RunOptions opts;

    auto* simulate = app.add_subcommand("simulate", "one grid-solver and one particle-filter path");
    auto* solve = app.add_subcommand("solve", "Monte Carlo estimate of u(mu, t) = E Phi(pi_T)");
    solve->add_flag("--surface", opts.surface, "emit the u-surface CSV and SVG");
    auto* verify = app.add_subcommand("verify", "derivative, generator, metric and model checks");
    auto* bp = app.add_subcommand("bp", "Borwein-Preiss searches with exhaustive certificates");
    auto* approx = app.add_subcommand("approx", "moment-polynomial approximation pipeline");
    auto* all = app.add_subcommand("all", "every acceptance criterion plus artifacts");
    for (auto* cmd : {simulate, solve, verify, bp, approx, all}) add_common(cmd, flags);

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        return run(name, flags, opts);
    } catch (const kslab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const kslab::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const kslab::SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
