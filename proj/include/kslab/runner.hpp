#pragma once

#include <string>
#include <vector>

#include "kslab/cli.hpp"
#include "kslab/varprinciple.hpp"

namespace kslab {

/// Everything a pipeline needs, built once from the validated config.
struct RunContext {
    ExperimentConfig cfg;
    std::shared_ptr<const DomainGrid> grid;
    Coefficients coeffs;
    OperatorSet ops;
    MetricFamily fam;
    GridMeasure mu0;
    TerminalFunctional phi;
};

RunContext make_context(const ExperimentConfig& cfg);

GridMeasure initial_measure(const ExperimentConfig& cfg, std::shared_ptr<const DomainGrid> grid);
TerminalFunctional terminal_preset(const ExperimentConfig& cfg, const MetricFamily& fam,
                                   std::shared_ptr<const DomainGrid> grid);

/// Randomized inputs for the verification batteries.
CylinderFunctional random_cylinder(std::uint64_t seed);
Coefficients random_coefficients(std::uint64_t seed);

/// Battery sizes; the defaults pin the acceptance scale
/// (K=[0,1], N=128, dt=1e-3, T=0.5, M=1e3 paths).
struct AcceptanceScale {
    int lfd_functionals = 50;
    int generator_triples = 100;
    int tower_combos = 5;
    int tower_paths = 1000;
    int dynkin_paths = 1000;
    int ito_paths = 100;
    int cross_replicas = 200;
    int cross_particles = 2000;
    int metric_triples = 1000;
    int bp_instances = 100;
    int bp_min_size = 10;
    int bp_max_size = 200;
    int sw_train = 500;
    int sw_heldout = 200;
    int sw_paths = 1000;
    int repro_paths = 64;
    int workers = 1;
};

/// Battery sizes proportional to the configured path budget (floored), so a
/// reduced config runs the same checks quickly.
AcceptanceScale scale_from_config(const ExperimentConfig& cfg);

struct AcceptanceOutcome {
    std::vector<CheckResult> checks;
    SolverDiagnostics diag; // accumulated over every solver run in the battery
};

/// All ten acceptance criteria at the given scale. When `cli_path` is
/// nonempty, the reproducibility criterion additionally runs the CLI twice
/// with different worker counts and byte-compares the reports (timing
/// excluded).
AcceptanceOutcome acceptance_checks(const RunContext& ctx, const AcceptanceScale& scale,
                                    const std::string& cli_path = "");

struct RunOptions {
    bool surface = false; // solve: emit the u-surface CSV/SVG
    std::string cli_path; // all: enables the cross-process reproducibility check
};

RunReport run_simulate(const RunContext& ctx);
RunReport run_solve(const RunContext& ctx, const RunOptions& opts = {});
RunReport run_verify(const RunContext& ctx);
RunReport run_bp(const RunContext& ctx);
RunReport run_approx(const RunContext& ctx);
RunReport run_all(const RunContext& ctx, const RunOptions& opts = {});

RunReport run_subcommand(const std::string& name, const ExperimentConfig& cfg,
                         const RunOptions& opts = {});

} // namespace kslab
