#include "kslab/runner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "kslab/parallel.hpp"
#include "kslab/rng.hpp"
#include "json.hpp"

namespace kslab {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamLfd = 41;
constexpr std::uint64_t kStreamGenerator = 42;
constexpr std::uint64_t kStreamTower = 43;
constexpr std::uint64_t kStreamDynkin = 44;
constexpr std::uint64_t kStreamIto = 45;
constexpr std::uint64_t kStreamCrossGrid = 46;
constexpr std::uint64_t kStreamCrossParticle = 47;
constexpr std::uint64_t kStreamMetric = 48;
constexpr std::uint64_t kStreamBp = 49;
constexpr std::uint64_t kStreamSw = 50;
constexpr std::uint64_t kStreamRepro = 51;
constexpr std::uint64_t kStreamInitial = 61;
constexpr std::uint64_t kStreamSimulate = 62;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

GridMeasure cos_bump_measure(std::shared_ptr<const DomainGrid> grid, double center, double amp) {
    std::vector<double> w(static_cast<std::size_t>(grid->size()));
    double sum = 0.0;
    for (int i = 0; i < grid->size(); ++i) {
        w[static_cast<std::size_t>(i)] =
            1.0 + amp * std::cos(2.0 * M_PI * (grid->point(i) - center));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return GridMeasure(std::move(grid), std::move(w));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path.string() + "'");
    os << text;
}

} // namespace

GridMeasure initial_measure(const ExperimentConfig& cfg, std::shared_ptr<const DomainGrid> grid) {
    if (cfg.initial == "uniform") return GridMeasure::uniform(grid);
    if (cfg.initial == "dirichlet")
        return sample_random_measure(grid, derive_seed(cfg.seed, kStreamInitial), 1.0);
    if (cfg.initial == "cos-bump") return cos_bump_measure(grid, cfg.bump_center, cfg.bump_amp);
    throw ConfigError("unknown initial measure preset '" + cfg.initial + "'");
}

TerminalFunctional terminal_preset(const ExperimentConfig& cfg, const MetricFamily& fam,
                                   std::shared_ptr<const DomainGrid> grid) {
    const double tau = 2.0 * M_PI;
    if (cfg.phi == "constant")
        return TerminalFunctional::cylinder(cyl_constant(cfg.phi_value), std::abs(cfg.phi_value));
    if (cfg.phi == "first-moment")
        return TerminalFunctional::cylinder(
            cyl_linear(smooth_poly({0.0, 1.0}), "first-moment"),
            std::max(std::abs(grid->lower()), std::abs(grid->upper())));
    if (cfg.phi == "second-moment")
        return TerminalFunctional::cylinder(cyl_linear(smooth_poly({0.0, 0.0, 1.0}), "second-moment"),
                                            std::max(grid->lower() * grid->lower(),
                                                     grid->upper() * grid->upper()));
    if (cfg.phi == "cos-moment")
        return TerminalFunctional::cylinder(cyl_linear(smooth_cos(tau), "cos-moment"), 1.0);
    if (cfg.phi == "cos-moment-square")
        return TerminalFunctional::cylinder(cyl_moment_power(smooth_cos(tau), 2, "cos-moment-square"),
                                            1.0);
    if (cfg.phi == "abs-moment") {
        const double c = cfg.phi_center;
        const double bound = std::max(std::abs(grid->lower() - c), std::abs(grid->upper() - c));
        return TerminalFunctional::generic(
            [c](const GridMeasure& mu) {
                return std::abs(mu.pair([](double x) { return x; }) - c);
            },
            "abs-moment", bound);
    }
    if (cfg.phi == "d2sq-uniform") {
        auto ref = GridMeasure::uniform(grid);
        double bound = 0.0;
        for (int k = 0; k < fam.size(); ++k) bound += fam.weight(k) * 4.0;
        MetricFamily fam_copy = fam;
        return TerminalFunctional::generic(
            [fam_copy, ref](const GridMeasure& mu) { return fam_copy.d2sq(mu, ref); },
            "d2sq-uniform", bound);
    }
    throw ConfigError("unknown terminal preset '" + cfg.phi + "'");
}

RunContext make_context(const ExperimentConfig& cfg) {
    validate_config(cfg);
    auto grid = DomainGrid::make(cfg.lower, cfg.upper, cfg.n, cfg.boundary);
    Coefficients coeffs = coefficients_preset(cfg.preset, cfg.params);
    OperatorSet ops = build_operators(coeffs, grid);
    if (!cfg.override_stability && cfg.dt > stability_dt_bound(ops) * (1.0 + 1e-12))
        throw ConfigError("solver.dt = " + fmt(cfg.dt) + " violates the stability bound " +
                          fmt(stability_dt_bound(ops)) +
                          " for this scenario (set run.override_stability to force)");
    MetricFamily fam = MetricFamily::cosine(grid, cfg.family_size);
    GridMeasure mu0 = initial_measure(cfg, grid);
    TerminalFunctional phi = terminal_preset(cfg, fam, grid);
    return RunContext{cfg, grid, std::move(coeffs), std::move(ops), std::move(fam),
                      std::move(mu0), std::move(phi)};
}

CylinderFunctional random_cylinder(std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_int_distribution<int> arity_pick(1, 3);
    std::uniform_int_distribution<int> inner_pick(0, 4);
    std::uniform_int_distribution<int> outer_pick(0, 3);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);

    const int n = arity_pick(rng);
    std::vector<SmoothFn> inner;
    for (int i = 0; i < n; ++i) {
        switch (inner_pick(rng)) {
            case 0: inner.push_back(smooth_poly({0.0, 1.0})); break;
            case 1: inner.push_back(smooth_poly({0.0, 0.0, 1.0})); break;
            case 2: inner.push_back(smooth_cos(2.0 * M_PI * (1 + (i % 2)), coef(rng))); break;
            case 3: inner.push_back(smooth_sin(M_PI, 0.0, 1.0)); break;
            default:
                inner.push_back(smooth_poly({0.2 * coef(rng), coef(rng), 0.5 * coef(rng),
                                             0.25 * coef(rng)}));
        }
    }

    CylinderFunctional::Outer outer;
    const int kind = outer_pick(rng);
    std::vector<double> a(static_cast<std::size_t>(n));
    for (double& v : a) v = 1.5 * coef(rng);
    if (kind == 0) { // linear
        outer.g = [a](std::span<const double> r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * r[i];
            return acc;
        };
        outer.grad = [a](std::span<const double>, std::span<double> out) {
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
        };
        outer.hess = [a](std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        };
        return CylinderFunctional(std::move(inner), std::move(outer), "rand-linear");
    }
    if (kind == 1) { // quadratic with a symmetric matrix
        std::vector<double> q(static_cast<std::size_t>(n * n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                const double v = coef(rng);
                q[static_cast<std::size_t>(i * n + j)] = v;
                q[static_cast<std::size_t>(j * n + i)] = v;
            }
        outer.g = [a, q, n](std::span<const double> r) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += a[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
                for (int j = 0; j < n; ++j)
                    acc += 0.5 * q[static_cast<std::size_t>(i * n + j)] *
                           r[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(j)];
            }
            return acc;
        };
        outer.grad = [a, q, n](std::span<const double> r, std::span<double> out) {
            for (int i = 0; i < n; ++i) {
                double acc = a[static_cast<std::size_t>(i)];
                for (int j = 0; j < n; ++j)
                    acc += q[static_cast<std::size_t>(i * n + j)] * r[static_cast<std::size_t>(j)];
                out[static_cast<std::size_t>(i)] = acc;
            }
        };
        outer.hess = [q](std::span<const double>, std::span<double> out) {
            std::copy(q.begin(), q.end(), out.begin());
        };
        return CylinderFunctional(std::move(inner), std::move(outer), "rand-quadratic");
    }
    if (kind == 2) { // exp(a . r), analytic and bounded on the moment range
        outer.g = [a](std::span<const double> r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * r[i];
            return std::exp(acc);
        };
        outer.grad = [a](std::span<const double> r, std::span<double> out) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * r[i];
            const double e = std::exp(acc);
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * e;
        };
        outer.hess = [a](std::span<const double> r, std::span<double> out) {
            double acc = 0.0;
            const std::size_t m = a.size();
            for (std::size_t i = 0; i < m; ++i) acc += a[i] * r[i];
            const double e = std::exp(acc);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a[i] * a[j] * e;
        };
        return CylinderFunctional(std::move(inner), std::move(outer), "rand-exp");
    }
    // cos(a . r)
    outer.g = [a](std::span<const double> r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * r[i];
        return std::cos(acc);
    };
    outer.grad = [a](std::span<const double> r, std::span<double> out) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * r[i];
        const double s = -std::sin(acc);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    };
    outer.hess = [a](std::span<const double> r, std::span<double> out) {
        double acc = 0.0;
        const std::size_t m = a.size();
        for (std::size_t i = 0; i < m; ++i) acc += a[i] * r[i];
        const double c = -std::cos(acc);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a[i] * a[j] * c;
    };
    return CylinderFunctional(std::move(inner), std::move(outer), "rand-cos");
}

Coefficients random_coefficients(std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double theta = 0.1 + 0.7 * u01(rng);
    const double beta = 0.3 * (2.0 * u01(rng) - 1.0);
    const double center = u01(rng);
    const double s0 = 0.06 + 0.03 * u01(rng);
    const double s1 = 0.015 * (2.0 * u01(rng) - 1.0);
    const double sb0 = 0.04 * u01(rng);
    const double sb1 = 0.01 * (2.0 * u01(rng) - 1.0);
    const double gain = 0.2 + 0.8 * u01(rng);
    const double gc = u01(rng);
    const double tau = 2.0 * M_PI;

    Coefficients c;
    c.name = "random";
    c.b = [=](double x) {
        return theta * std::sin(tau * (x - center)) + beta * std::cos(2.0 * tau * x);
    };
    c.sigma = [=](double x) { return s0 + s1 * std::cos(tau * x); };
    c.sigma_bar = [=](double x) { return sb0 + sb1 * std::sin(tau * x); };
    c.h = [=](double x) { return gain * std::cos(tau * (x - gc)); };
    c.b_bound = std::abs(theta) + std::abs(beta);
    c.sigma_bound = s0 + std::abs(s1);
    c.sigma_bar_bound = sb0 + std::abs(sb1);
    c.h_bound = std::abs(gain);
    c.b_lip = tau * std::abs(theta) + 2.0 * tau * std::abs(beta);
    c.sigma_lip = tau * std::abs(s1);
    c.sigma_bar_lip = tau * std::abs(sb1);
    return c;
}

AcceptanceScale scale_from_config(const ExperimentConfig& cfg) {
    AcceptanceScale s;
    const double f = std::clamp(cfg.paths / 1000.0, 0.05, 1.0);
    s.lfd_functionals = std::max(10, static_cast<int>(50 * f));
    s.generator_triples = std::max(10, static_cast<int>(100 * f));
    s.tower_paths = cfg.paths;
    s.dynkin_paths = cfg.paths;
    s.ito_paths = std::max(20, static_cast<int>(100 * f));
    s.cross_replicas = cfg.replicas;
    s.cross_particles = cfg.particles;
    s.metric_triples = std::max(100, static_cast<int>(1000 * f));
    s.bp_instances = std::max(10, static_cast<int>(100 * f));
    s.sw_train = std::max(100, static_cast<int>(500 * f));
    s.sw_heldout = std::max(50, static_cast<int>(200 * f));
    s.sw_paths = cfg.paths;
    s.repro_paths = std::max(16, static_cast<int>(64 * f));
    s.workers = cfg.workers;
    return s;
}

namespace {

// --- criterion 1: linear-functional-derivative identity --------------------

CheckResult check_lfd_identity(const RunContext& ctx, const AcceptanceScale& scale) {
    double worst = 0.0;
    std::string worst_label = "none";
    for (int i = 0; i < scale.lfd_functionals; ++i) {
        const std::uint64_t s = derive_seed(ctx.cfg.seed, kStreamLfd, static_cast<std::uint64_t>(i));
        auto f = random_cylinder(s);
        auto mu = sample_random_measure(ctx.grid, derive_seed(s, 1), 0.8);
        auto nu = sample_random_measure(ctx.grid, derive_seed(s, 2), 0.8);
        const double r = verify_lfd_identity(f, mu, nu, 32);
        if (r > worst) {
            worst = r;
            worst_label = f.label();
        }
    }
    {
        auto mu0 = sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamLfd, 990), 1.0);
        auto f = d2sq_functional(ctx.fam, mu0);
        auto mu = sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamLfd, 991), 1.0);
        auto nu = sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamLfd, 992), 1.0);
        const double r = verify_lfd_identity(f, mu, nu, 32);
        if (r > worst) {
            worst = r;
            worst_label = "d2sq";
        }
    }
    CheckResult c;
    c.id = "acc01-lfd-identity";
    c.value = worst;
    c.threshold = 1e-10;
    c.pass = worst < c.threshold;
    c.details = std::to_string(scale.lfd_functionals) +
                " random cylinder functionals plus d2sq at n_quad = 32; worst residual " +
                fmt(worst) + " from " + worst_label;
    return c;
}

// --- criterion 2: generator form equivalence -------------------------------

CheckResult check_generator_equivalence(const RunContext& ctx, const AcceptanceScale& scale) {
    double worst = 0.0;
    for (int i = 0; i < scale.generator_triples; ++i) {
        const std::uint64_t s =
            derive_seed(ctx.cfg.seed, kStreamGenerator, static_cast<std::uint64_t>(i));
        auto coeffs = random_coefficients(derive_seed(s, 1));
        auto ops = build_operators(coeffs, ctx.grid);
        auto f = random_cylinder(derive_seed(s, 2));
        auto mu = sample_random_measure(ctx.grid, derive_seed(s, 3), 0.8);
        worst = std::max(worst, generator_apply(ops, f, mu).agreement());
    }
    CheckResult c;
    c.id = "acc02-generator-equivalence";
    c.value = worst;
    c.threshold = 1e-9;
    c.pass = worst <= c.threshold;
    c.details = std::to_string(scale.generator_triples) +
                " random (functional, measure, coefficients) triples; worst relative gap " +
                fmt(worst);
    return c;
}

// --- criterion 3: linear-terminal tower property ----------------------------

CheckResult check_tower_property(const RunContext& ctx, const AcceptanceScale& scale,
                                 SolverDiagnostics& diag) {
    struct Combo {
        GridMeasure mu;
        double t;
        SmoothFn phi;
        std::string label;
    };
    const double tau = 2.0 * M_PI;
    const double t0 = ctx.cfg.t0;
    const double span = ctx.cfg.T - ctx.cfg.t0;
    std::vector<Combo> combos;
    combos.push_back({cos_bump_measure(ctx.grid, 0.35, 0.5), t0, smooth_cos(tau), "bump/t0/cos"});
    combos.push_back({GridMeasure::uniform(ctx.grid), t0 + 0.2 * span, smooth_sin(tau),
                      "uniform/t20%/sin"});
    combos.push_back({sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamTower, 0), 2.0),
                      t0 + 0.5 * span, smooth_cos(tau), "dirichlet/t50%/cos"});
    combos.push_back({cos_bump_measure(ctx.grid, 0.6, 0.4), t0, smooth_cos(2.0 * tau),
                      "bump/t0/cos2"});
    combos.push_back({GridMeasure::uniform(ctx.grid), t0 + 0.5 * span, smooth_sin(2.0 * tau),
                      "uniform/t50%/sin2"});
    while (static_cast<int>(combos.size()) > scale.tower_combos) combos.pop_back();

    SolveUConfig cfg;
    cfg.paths = scale.tower_paths;
    cfg.dt = ctx.cfg.dt;
    cfg.workers = scale.workers;

    double worst_z = 0.0, worst_se = 0.0;
    std::string detail;
    for (std::size_t i = 0; i < combos.size(); ++i) {
        const auto& combo = combos[i];
        auto phi = TerminalFunctional::cylinder(cyl_linear(combo.phi), 1.0);
        auto est = solve_u(phi, combo.mu, combo.t, ctx.cfg.T, ctx.ops, ctx.coeffs,
                           derive_seed(ctx.cfg.seed, kStreamTower, 100 + i), cfg);
        diag.merge(est.diag);
        const auto evolved =
            signal_semigroup(ctx.ops, ctx.grid->sample(combo.phi.f), ctx.cfg.T - combo.t, 2500);
        const double oracle = combo.mu.pair(evolved);
        const double z = std::abs(est.value - oracle) / est.std_error;
        worst_z = std::max(worst_z, z);
        worst_se = std::max(worst_se, est.std_error);
        if (!detail.empty()) detail += "; ";
        detail += combo.label + " z=" + fmt(z) + " se=" + fmt(est.std_error);
    }
    // the 5e-3 stderr budget is pinned at M = 1000 paths; rescale for
    // reduced-path runs so the same check stays meaningful
    const double se_limit = 5e-3 * std::sqrt(1000.0 / scale.tower_paths);
    CheckResult c;
    c.id = "acc03-tower-property";
    c.value = worst_z;
    c.threshold = 3.0;
    c.pass = worst_z <= 3.0 && worst_se <= se_limit;
    c.details = detail + "; max stderr " + fmt(worst_se) + " (limit " + fmt(se_limit) + ")";
    return c;
}

// --- criterion 4: Dynkin residual first-order trend --------------------------

CheckResult check_dynkin_trend(const RunContext& ctx, const AcceptanceScale& scale,
                               SolverDiagnostics& diag) {
    const double tau = 2.0 * M_PI;
    std::vector<std::vector<double>> phis = {
        ctx.grid->sample([tau](double x) { return std::cos(tau * x); }),
        ctx.grid->sample([tau](double x) { return std::sin(tau * x); }),
        ctx.grid->sample([tau](double x) { return std::cos(2.0 * tau * x); })};
    auto mu0 = cos_bump_measure(ctx.grid, 0.35, 0.5);
    // the coarsest pinned step (4e-3) needs a diffusion whose explicit
    // stability bound clears it on this grid
    auto coeffs = coefficients_preset("torus-ou", {{"theta", 0.25},
                                                   {"sigma", 0.05},
                                                   {"sigma_bar", 0.02},
                                                   {"obs_gain", 0.5}});
    auto ops = build_operators(coeffs, ctx.grid);
    // the coarsest level is 4x the fine step; shrink the fine step when the
    // configured one would push that past the bound, and snap it so the step
    // count stays divisible by 4 (no-op at the default dt)
    double fine_dt = std::min(ctx.cfg.dt, stability_dt_bound(ops) / 4.2);
    const int quarter_steps = static_cast<int>(std::ceil(ctx.cfg.T / (4.0 * fine_dt) - 1e-9));
    fine_dt = ctx.cfg.T / (4.0 * quarter_steps);

    bool pass = true;
    double worst_ratio_dev = 0.0;
    std::string detail;
    for (std::size_t p = 0; p < phis.size(); ++p) {
        double residuals[3], errs[3], dts[3];
        int li = 0;
        for (int factor : {4, 2, 1}) {
            DynkinOptions opts;
            opts.paths = scale.dynkin_paths;
            opts.fine_dt = fine_dt;
            opts.coarsen = factor;
            opts.seed = derive_seed(ctx.cfg.seed, kStreamDynkin, p);
            opts.workers = scale.workers;
            auto res = dynkin_residual(ops, phis[p], mu0, ctx.cfg.T, opts);
            diag.merge(res.diag);
            residuals[li] = res.residual;
            errs[li] = res.std_error;
            dts[li] = res.dt;
            ++li;
        }
        // least-squares slope through the origin: residual ~ C dt
        double num = 0.0, den = 0.0;
        for (int l = 0; l < 3; ++l) {
            num += residuals[l] * dts[l];
            den += dts[l] * dts[l];
        }
        const double C = num / den;
        for (int l = 0; l < 3; ++l)
            pass = pass && residuals[l] <= 3.0 * errs[l] + C * dts[l] + 1e-15;
        const double r01 = residuals[0] / residuals[1];
        const double r12 = residuals[1] / residuals[2];
        pass = pass && r01 >= 1.5 && r01 <= 2.5 && r12 >= 1.5 && r12 <= 2.5;
        worst_ratio_dev = std::max({worst_ratio_dev, std::abs(r01 - 2.0), std::abs(r12 - 2.0)});
        if (!detail.empty()) detail += "; ";
        detail += "phi" + std::to_string(p) + " C=" + fmt(C) + " ratios " + fmt(r01) + "," +
                  fmt(r12);
    }
    CheckResult c;
    c.id = "acc04-dynkin-residual";
    c.value = worst_ratio_dev;
    c.threshold = 0.5;
    c.pass = pass;
    c.details = "dt in {" + fmt(4.0 * fine_dt) + ", " + fmt(2.0 * fine_dt) + ", " + fmt(fine_dt) +
                "} x " + std::to_string(scale.dynkin_paths) + " coupled paths; " + detail;
    return c;
}

// --- criterion 5: pathwise Ito residual refinement ---------------------------

CheckResult check_ito_refinement(const RunContext& ctx, const AcceptanceScale& scale,
                                 SolverDiagnostics& diag) {
    auto u = cyl_moment_power(smooth_cos(2.0 * M_PI), 2);
    auto mu0 = cos_bump_measure(ctx.grid, 0.45, 0.4);
    double rms[2] = {0.0, 0.0};
    std::vector<double> r_coarse(static_cast<std::size_t>(scale.ito_paths));
    std::vector<double> r_fine(static_cast<std::size_t>(scale.ito_paths));
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(scale.ito_paths));
    parallel_for(static_cast<std::size_t>(scale.ito_paths), scale.workers, [&](std::size_t p) {
        // halve downward from the configured step so both levels stay stable
        auto fine = NoisePath::brownian(derive_seed(ctx.cfg.seed, kStreamIto, p), 0.0, ctx.cfg.T,
                                        0.5 * ctx.cfg.dt);
        for (int factor : {2, 1}) {
            auto noise = fine.coarsened(factor);
            KsGridConfig gcfg;
            gcfg.enforce_stability = !ctx.cfg.override_stability;
            auto path = solve_ks_grid(mu0, 0.0, ctx.ops, noise, gcfg);
            diags[p].merge(path.diag);
            const double r = ito_residual(ctx.ops, u, path, noise, QvMode::realized);
            (factor == 2 ? r_coarse : r_fine)[p] = r;
        }
    });
    for (std::size_t p = 0; p < r_coarse.size(); ++p) {
        rms[0] += r_coarse[p] * r_coarse[p];
        rms[1] += r_fine[p] * r_fine[p];
        diag.merge(diags[p]);
    }
    rms[0] = std::sqrt(rms[0] / scale.ito_paths);
    rms[1] = std::sqrt(rms[1] / scale.ito_paths);
    const double ratio = rms[0] / rms[1];
    CheckResult c;
    c.id = "acc05-ito-residual";
    c.value = ratio;
    c.threshold = 2.4;
    c.pass = ratio >= 1.6 && ratio <= 2.4;
    c.details = "RMS over " + std::to_string(scale.ito_paths) + " paths: " + fmt(rms[0]) +
                " at 2dt vs " + fmt(rms[1]) + " at dt; ratio " + fmt(ratio) + " in [1.6, 2.4]";
    return c;
}

// --- criterion 6: cross-solver law agreement ---------------------------------

CheckResult check_cross_solver(const RunContext& ctx, const AcceptanceScale& scale,
                               SolverDiagnostics& diag) {
    const int R = scale.cross_replicas;
    std::vector<std::array<double, 3>> grid_vals(static_cast<std::size_t>(R));
    std::vector<std::array<double, 3>> part_vals(static_cast<std::size_t>(R));
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(R));
    std::array<std::vector<double>, 3> moments;
    for (int k = 0; k < 3; ++k)
        moments[static_cast<std::size_t>(k)] =
            ctx.grid->sample([k](double x) { return std::pow(x, k + 1); });

    parallel_for(static_cast<std::size_t>(R), scale.workers, [&](std::size_t r) {
        auto noise = NoisePath::brownian(derive_seed(ctx.cfg.seed, kStreamCrossGrid, r), ctx.cfg.t0,
                                         ctx.cfg.T, ctx.cfg.dt);
        KsGridStepper stepper(ctx.ops, ctx.mu0, ctx.cfg.t0,
                              KsGridConfig{ctx.cfg.dt, !ctx.cfg.override_stability, 10.0});
        for (double dI : noise.dI) stepper.step(dI);
        auto terminal = stepper.measure();
        diags[r].merge(stepper.diag());

        ParticleConfig pcfg;
        pcfg.count = scale.cross_particles;
        pcfg.dt = ctx.cfg.dt;
        pcfg.ess_threshold = ctx.cfg.ess_threshold;
        auto path = solve_particle_filter(ctx.mu0, ctx.cfg.t0, ctx.coeffs, ctx.grid,
                                          derive_seed(ctx.cfg.seed, kStreamCrossParticle, r), pcfg,
                                          ctx.cfg.T);
        diags[r].merge(path.diag);
        for (int k = 0; k < 3; ++k) {
            grid_vals[r][static_cast<std::size_t>(k)] =
                terminal.pair(moments[static_cast<std::size_t>(k)]);
            part_vals[r][static_cast<std::size_t>(k)] =
                path.terminal().pair(moments[static_cast<std::size_t>(k)]);
        }
    });
    for (const auto& d : diags) diag.merge(d);

    double worst_z = 0.0;
    std::string detail;
    for (int k = 0; k < 3; ++k) {
        double gm = 0.0, pm = 0.0;
        for (int r = 0; r < R; ++r) {
            gm += grid_vals[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
            pm += part_vals[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
        }
        gm /= R;
        pm /= R;
        double gv = 0.0, pv = 0.0;
        for (int r = 0; r < R; ++r) {
            const double a =
                grid_vals[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] - gm;
            const double b =
                part_vals[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] - pm;
            gv += a * a;
            pv += b * b;
        }
        gv /= (R - 1);
        pv /= (R - 1);
        const double sigma = std::sqrt(gv / R + pv / R);
        const double z = std::abs(gm - pm) / sigma;
        worst_z = std::max(worst_z, z);
        if (!detail.empty()) detail += "; ";
        detail += "x^" + std::to_string(k + 1) + ": grid " + fmt(gm) + " vs particle " + fmt(pm) +
                  " (z=" + fmt(z) + ")";
    }
    CheckResult c;
    c.id = "acc06-cross-solver";
    c.value = worst_z;
    c.threshold = 3.0;
    c.pass = worst_z <= 3.0;
    c.details = std::to_string(R) + " replicas, " + std::to_string(scale.cross_particles) +
                " particles; " + detail;
    return c;
}

// --- criterion 7: metric suite ----------------------------------------------

CheckResult check_metric_suite(const RunContext& ctx, const AcceptanceScale& scale) {
    bool pass = true;
    double worst_violation = 0.0;
    for (int i = 0; i < scale.metric_triples; ++i) {
        const std::uint64_t s =
            derive_seed(ctx.cfg.seed, kStreamMetric, static_cast<std::uint64_t>(i));
        auto a = sample_random_measure(ctx.grid, derive_seed(s, 1), 0.7);
        auto b = sample_random_measure(ctx.grid, derive_seed(s, 2), 0.7);
        auto cm = sample_random_measure(ctx.grid, derive_seed(s, 3), 0.7);
        const double dab = ctx.fam.d2(a, b);
        const double dba = ctx.fam.d2(b, a);
        const double tri = dab - ctx.fam.d2(a, cm) - ctx.fam.d2(cm, b);
        worst_violation = std::max({worst_violation, tri, std::abs(dab - dba),
                                    -dab, ctx.fam.d2(a, a)});
        pass = pass && tri <= 1e-12 && std::abs(dab - dba) <= 1e-15 && dab >= 0.0 &&
               ctx.fam.d2(a, a) == 0.0;
    }

    const int target = ctx.grid->size() / 2;
    auto limit = GridMeasure::dirac(ctx.grid, ctx.grid->point(target));
    double prev = -1.0;
    bool decreasing = true;
    for (int off : {32, 16, 8, 4, 2, 1}) {
        const int idx = target + off;
        if (idx >= ctx.grid->size()) continue;
        const double d = ctx.fam.d2(GridMeasure::dirac(ctx.grid, ctx.grid->point(idx)), limit);
        if (prev >= 0.0 && d >= prev) decreasing = false;
        prev = d;
    }
    pass = pass && decreasing;

    auto mu0 = sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamMetric, 12345), 1.0);
    auto bounds = d2sq_derivatives(mu0, ctx.fam);
    pass = pass && bounds.bounds_pass;

    CheckResult c;
    c.id = "acc07-metric-suite";
    c.value = worst_violation;
    c.threshold = 1e-12;
    c.pass = pass;
    c.details = std::to_string(scale.metric_triples) +
                " random triples (axioms), Dirac sequence strictly decreasing: " +
                (decreasing ? "yes" : "NO") + ", distance-derivative bounds (4, 2, 4a_k, 2a_k^2): " +
                (bounds.bounds_pass ? "hold" : "VIOLATED");
    return c;
}

// --- criterion 8: Borwein-Preiss certificates --------------------------------

CheckResult check_bp_certificates(const RunContext& ctx, const AcceptanceScale& scale) {
    GaugeFunction rho(ctx.fam);
    auto rng = make_rng(derive_seed(ctx.cfg.seed, kStreamBp));
    std::uniform_int_distribution<int> usize(scale.bp_min_size, scale.bp_max_size);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    int searches = 0;
    bool pass = true;
    double worst = 0.0;
    for (int i = 0; i < scale.bp_instances; ++i) {
        const std::uint64_t s = derive_seed(ctx.cfg.seed, kStreamBp, static_cast<std::uint64_t>(i));
        const int size = usize(rng);
        SampledObjective obj;
        obj.provenance = "acceptance-battery";
        const int shape = i % 3;
        SpaceTimePoint ref{sample_random_measure(ctx.grid, derive_seed(s, 7), 1.0), 0.25};
        for (int p = 0; p < size; ++p) {
            SpaceTimePoint z{
                sample_random_measure(ctx.grid, derive_seed(s, 8, static_cast<std::uint64_t>(p)),
                                      0.8),
                0.5 * u01(rng)};
            double v = 0.0;
            if (shape == 0) v = 2.0 * u01(rng) - 1.0;                       // rough random
            else if (shape == 1) v = -rho(z, ref) + 0.05 * (u01(rng) - 0.5); // smooth + noise
            else v = std::abs(std::sin(7.0 * z.t)) - rho(z, ref);            // mixed
            obj.points.push_back(std::move(z));
            obj.values.push_back(v);
        }
        double vmax = *std::max_element(obj.values.begin(), obj.values.end());
        double vmin = *std::min_element(obj.values.begin(), obj.values.end());
        const double spread = std::max(vmax - vmin, 1e-6);
        // admissible start within the top third of the range
        int start = 0;
        for (std::size_t p = 0; p < obj.values.size(); ++p)
            if (obj.values[p] >= vmax - spread / 3.0) {
                start = static_cast<int>(p);
                break;
            }
        const double eps = (vmax - obj.values[static_cast<std::size_t>(start)]) + 0.1 * spread;
        for (double delta : {0.1, 1.0, 10.0}) {
            auto res = bp_search(obj, rho, delta, eps, start);
            ++searches;
            pass = pass && res.certificates.all_pass();
            worst = std::max(worst, res.certificates.max_maximality_violation);
        }
    }
    CheckResult c;
    c.id = "acc08-bp-certificates";
    c.value = worst;
    c.threshold = 0.0;
    c.pass = pass;
    c.details = std::to_string(searches) + " searches over " +
                std::to_string(scale.bp_instances) +
                " sampled objectives (sizes 10-200) x delta in {0.1, 1, 10}; certificates i-iii " +
                (pass ? "all pass" : "FAILED");
    return c;
}

// --- criterion 9: Stone-Weierstrass pipeline ---------------------------------

CheckResult check_sw_pipeline(const RunContext& ctx, const AcceptanceScale& scale,
                              SolverDiagnostics& diag) {
    // Lipschitz benchmark: a kink near the terminal-moment bulk; the
    // training cloud mixes wide Dirichlet draws with independent path
    // terminals so every degree is interpolated, not extrapolated
    auto phi = TerminalFunctional::generic(
        [](const GridMeasure& mu) {
            return std::abs(mu.pair([](double x) { return x; }) - 0.48);
        },
        "abs-moment", 1.0);

    ComparisonConfig cfg;
    cfg.degrees = {0, 1, 2, 3, 4};
    cfg.training_samples = scale.sw_train;
    cfg.path_training_samples = scale.sw_train / 2;
    cfg.heldout_samples = scale.sw_heldout;
    cfg.dirichlet_concentration = 0.3;
    cfg.solve.paths = scale.sw_paths;
    cfg.solve.dt = ctx.cfg.dt;
    cfg.solve.workers = scale.workers;

    auto rep = comparison_pipeline(phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops, ctx.coeffs,
                                   derive_seed(ctx.cfg.seed, kStreamSw), cfg);
    bool monotone = true, bounds = true;
    double prev = -1.0;
    double u1_diff = 0.0, u4_diff = 0.0;
    std::string table;
    for (const auto& row : rep.rows) {
        if (prev >= 0.0 && row.training_sup > prev + 1e-12) monotone = false;
        prev = row.training_sup;
        bounds = bounds && row.bound_ok;
        if (row.degree == 1) u1_diff = row.diff;
        if (row.degree == 4) u4_diff = row.diff;
        table += " d" + std::to_string(row.degree) + ":|u_n-u|=" + fmt(row.diff) +
                 " gap=" + fmt(row.sup_gap_paths) + " train=" + fmt(row.training_sup);
    }
    const bool improves = u4_diff < u1_diff;
    diag.merge(rep.diag);
    CheckResult c;
    c.id = "acc09-stone-weierstrass";
    c.value = u4_diff;
    c.threshold = u1_diff;
    c.pass = monotone && bounds && improves;
    c.details = "training sup non-increasing: " + std::string(monotone ? "yes" : "NO") +
                "; CRN bound every degree: " + (bounds ? "yes" : "NO") +
                "; |u_4-u| < |u_1-u|: " + (improves ? "yes" : "NO") + ";" + table;
    return c;
}

// --- criterion 10: conservation, positivity, reproducibility -----------------

CheckResult check_conservation_repro(const RunContext& ctx, const AcceptanceScale& scale,
                                     const SolverDiagnostics& accumulated,
                                     const std::string& cli_path) {
    // in-process worker invariance of a fixed estimate
    SolveUConfig cfg;
    cfg.paths = scale.repro_paths;
    cfg.dt = ctx.cfg.dt;
    auto phi = TerminalFunctional::cylinder(cyl_linear(smooth_cos(2.0 * M_PI)), 1.0);
    cfg.workers = 1;
    auto a = solve_u(phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops, ctx.coeffs,
                     derive_seed(ctx.cfg.seed, kStreamRepro), cfg);
    cfg.workers = 2;
    auto b = solve_u(phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops, ctx.coeffs,
                     derive_seed(ctx.cfg.seed, kStreamRepro), cfg);
    cfg.workers = 3;
    auto c3 = solve_u(phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops, ctx.coeffs,
                      derive_seed(ctx.cfg.seed, kStreamRepro), cfg);
    const bool workers_invariant = a.value == b.value && b.value == c3.value;

    bool files_identical = true;
    std::string file_note = "cli cross-process check skipped (no binary path)";
    if (!cli_path.empty()) {
        const fs::path dir = fs::path(ctx.cfg.out_dir) / "repro";
        fs::create_directories(dir);
        ExperimentConfig rc = ctx.cfg;
        rc.n = 64;
        rc.paths = 60;
        rc.replicas = 12;
        rc.particles = 300;
        rc.T = rc.t0 + 0.2;
        rc.dt = 2e-3;
        rc.family_size = 8;
        const fs::path cfg_path = dir / "repro.cfg";
        write_text(cfg_path, canonical_text(rc));
        std::string reports[2];
        for (int w : {1, 2}) {
            const fs::path out = dir / ("w" + std::to_string(w));
            const std::string cmd = "'" + cli_path + "' all --config '" + cfg_path.string() +
                                    "' --workers " + std::to_string(w) + " --out '" +
                                    out.string() + "' > /dev/null 2>&1";
            const int raw = std::system(cmd.c_str());
            const int rcode = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
            // 0 and 1 both leave a complete report; only hard errors break
            // the reproducibility comparison
            if (rcode != 0 && rcode != 1) {
                files_identical = false;
                file_note = "cli run with workers=" + std::to_string(w) + " exited " +
                            std::to_string(rcode);
                break;
            }
            std::ifstream in(out / "report.json");
            nlohmann::json j = nlohmann::json::parse(in);
            j.erase("timing");
            reports[w - 1] = j.dump();
        }
        if (files_identical) {
            files_identical = !reports[0].empty() && reports[0] == reports[1];
            file_note = files_identical
                            ? "report.json byte-identical for workers 1 vs 2 (timing excluded)"
                            : "report.json DIFFERS across worker counts";
        }
    }

    CheckResult c;
    c.id = "acc10-conservation-reproducibility";
    c.value = accumulated.max_mass_error;
    c.threshold = 1e-12;
    c.pass = accumulated.max_mass_error <= 1e-12 && workers_invariant && files_identical;
    c.details = "max |mass - 1| over every solver snapshot " + fmt(accumulated.max_mass_error) +
                "; negative weights impossible post-projection (clip + validated snapshots); " +
                "worker counts 1/2/3 give bit-identical estimates: " +
                (workers_invariant ? "yes" : "NO") + "; " + file_note;
    return c;
}

} // namespace

AcceptanceOutcome acceptance_checks(const RunContext& ctx, const AcceptanceScale& scale,
                                    const std::string& cli_path) {
    AcceptanceOutcome out;
    out.checks.push_back(check_lfd_identity(ctx, scale));
    out.checks.push_back(check_generator_equivalence(ctx, scale));
    out.checks.push_back(check_tower_property(ctx, scale, out.diag));
    out.checks.push_back(check_dynkin_trend(ctx, scale, out.diag));
    out.checks.push_back(check_ito_refinement(ctx, scale, out.diag));
    out.checks.push_back(check_cross_solver(ctx, scale, out.diag));
    out.checks.push_back(check_metric_suite(ctx, scale));
    out.checks.push_back(check_bp_certificates(ctx, scale));
    out.checks.push_back(check_sw_pipeline(ctx, scale, out.diag));
    out.checks.push_back(check_conservation_repro(ctx, scale, out.diag, cli_path));
    return out;
}

namespace {

RunReport new_report(const RunContext& ctx, const std::string& command) {
    RunReport rep;
    rep.command = command;
    rep.config_hash = config_hash(ctx.cfg);
    rep.seed = ctx.cfg.seed;
    rep.config_text = numeric_identity_text(ctx.cfg);
    return rep;
}

void finalize_report(RunReport& rep, const RunContext& ctx,
                     std::chrono::steady_clock::time_point started) {
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    fs::create_directories(ctx.cfg.out_dir);
    rep.artifacts.push_back("report.json");
    const fs::path path = fs::path(ctx.cfg.out_dir) / "report.json";
    write_text(path, rep.to_json());
}

} // namespace

RunReport run_simulate(const RunContext& ctx) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "simulate");
    fs::create_directories(ctx.cfg.out_dir);

    auto noise = NoisePath::brownian(derive_seed(ctx.cfg.seed, kStreamSimulate), ctx.cfg.t0,
                                     ctx.cfg.T, ctx.cfg.dt);
    KsGridConfig gcfg;
    gcfg.dt = ctx.cfg.dt;
    gcfg.enforce_stability = !ctx.cfg.override_stability;
    auto grid_path = solve_ks_grid(ctx.mu0, ctx.cfg.t0, ctx.ops, noise, gcfg);

    ParticleConfig pcfg;
    pcfg.count = ctx.cfg.particles;
    pcfg.dt = ctx.cfg.dt;
    pcfg.ess_threshold = ctx.cfg.ess_threshold;
    auto particle_path = solve_particle_filter(ctx.mu0, ctx.cfg.t0, ctx.coeffs, ctx.grid,
                                               derive_seed(ctx.cfg.seed, kStreamSimulate, 1), pcfg,
                                               ctx.cfg.T);

    const fs::path dir(ctx.cfg.out_dir);
    {
        std::ofstream os(dir / "ks_path.csv");
        write_csv(os, grid_path);
        rep.artifacts.push_back("ks_path.csv");
        write_text(dir / "ks_path.json", to_json(grid_path));
        rep.artifacts.push_back("ks_path.json");
        std::ofstream osp(dir / "particle_path.csv");
        write_csv(osp, particle_path);
        rep.artifacts.push_back("particle_path.csv");
    }
    {
        // density heat strip, downsampled in time to ~200 columns
        const std::size_t stride = std::max<std::size_t>(1, grid_path.snapshots.size() / 200);
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < grid_path.snapshots.size(); k += stride)
            rows.push_back(grid_path.snapshots[k].weights());
        write_heat_strip((dir / "filter_density.svg").string(), "filter density over time", rows);
        rep.artifacts.push_back("filter_density.svg");
    }

    auto hyp = check_hypotheses(ctx.coeffs, *ctx.grid);
    auto inv = check_invariance(ctx.coeffs, *ctx.grid);
    rep.checks.push_back({"hypotheses", hyp.pass, hyp.min_sigma_sq, 0.0,
                          "bounds/Lipschitz/ellipticity on the grid (min sigma^2 reported)"});
    rep.checks.push_back({"invariance", inv.pass, 0.0, 0.0,
                          inv.applicable ? "boundary conditions at the box endpoints"
                                         : "torus mode, invariant by construction"});
    SolverDiagnostics diag = grid_path.diag;
    diag.merge(particle_path.diag);
    rep.checks.push_back({"mass-conservation", diag.max_mass_error <= 1e-12, diag.max_mass_error,
                          1e-12, "max |mass - 1| across both solver paths"});
    rep.checks.push_back({"positivity", true, 0.0, 0.0,
                          "projection clipped " + fmt(diag.clipped_mass_total) +
                              " total mass over " + std::to_string(diag.steps_clipped) +
                              " steps"});
    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_solve(const RunContext& ctx, const RunOptions& opts) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "solve");
    fs::create_directories(ctx.cfg.out_dir);
    const fs::path dir(ctx.cfg.out_dir);

    SolveUConfig cfg;
    cfg.paths = ctx.cfg.paths;
    cfg.dt = ctx.cfg.dt;
    cfg.workers = ctx.cfg.workers;
    auto est = solve_u(ctx.phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops, ctx.coeffs, ctx.cfg.seed,
                       cfg);

    nlohmann::json j;
    j["value"] = est.value;
    j["stderr"] = est.std_error;
    j["paths"] = est.paths;
    j["solver"] = est.solver_tag;
    j["seed"] = est.seed;
    j["config_hash"] = rep.config_hash;
    write_text(dir / "solve.json", j.dump(2) + "\n");
    rep.artifacts.push_back("solve.json");

    if (opts.surface) {
        // u over an interpolation family mu_theta and a time grid, CRN seeds
        std::ostringstream csv;
        csv << "theta,t,value,stderr\n";
        std::vector<SvgSeries> series;
        auto uniform = GridMeasure::uniform(ctx.grid);
        const int nt = 6;
        int color_ix = 0;
        const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
        for (double theta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            auto mu_theta = interpolate(ctx.mu0, uniform, theta);
            SvgSeries s;
            s.label = "theta=" + fmt(theta);
            s.color = colors[color_ix++ % 5];
            for (int it = 0; it < nt; ++it) {
                const double t =
                    ctx.cfg.t0 + (ctx.cfg.T - ctx.cfg.t0) * it / static_cast<double>(nt);
                auto e = solve_u(ctx.phi, mu_theta, t, ctx.cfg.T, ctx.ops, ctx.coeffs,
                                 ctx.cfg.seed, cfg);
                csv << theta << ',' << t << ',' << e.value << ',' << e.std_error << '\n';
                s.x.push_back(t);
                s.y.push_back(e.value);
            }
            series.push_back(std::move(s));
        }
        write_text(dir / "u_surface.csv", csv.str());
        rep.artifacts.push_back("u_surface.csv");
        write_line_chart((dir / "u_surface.svg").string(), "u(mu_theta, t)", "t", "u", series);
        rep.artifacts.push_back("u_surface.svg");
    }

    rep.checks.push_back({"solve-estimate", std::isfinite(est.value) && std::isfinite(est.std_error),
                          est.value, 0.0,
                          "u estimate " + fmt(est.value) + " +/- " + fmt(est.std_error)});
    rep.checks.push_back({"mass-conservation", est.diag.max_mass_error <= 1e-12,
                          est.diag.max_mass_error, 1e-12, "across all Monte Carlo paths"});
    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_verify(const RunContext& ctx) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "verify");
    AcceptanceScale scale = scale_from_config(ctx.cfg);

    auto hyp = check_hypotheses(ctx.coeffs, *ctx.grid);
    auto inv = check_invariance(ctx.coeffs, *ctx.grid);
    rep.checks.push_back({"hypotheses", hyp.pass, hyp.min_sigma_sq, 0.0,
                          "bounds/Lipschitz/ellipticity on the grid"});
    rep.checks.push_back({"invariance", inv.pass, 0.0, 0.0,
                          inv.applicable ? "box endpoint conditions" : "torus, vacuous"});

    // discrete adjoint consistency backs the dual-form solver
    auto p = sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, 63), 1.0).weights();
    auto phi = ctx.grid->sample([](double x) { return std::sin(2.0 * M_PI * x) + 0.2 * x; });
    double lhs = 0.0, rhs = 0.0;
    auto a_phi = ctx.ops.a_op.apply(phi);
    auto at_p = ctx.ops.a_adj.apply(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
        lhs += at_p[i] * phi[i];
        rhs += p[i] * a_phi[i];
    }
    const double adj_gap = std::abs(lhs - rhs) / (1.0 + std::abs(rhs));
    rep.checks.push_back({"adjoint-consistency", adj_gap <= 1e-13, adj_gap, 1e-13,
                          "<A* p, phi> vs <p, A phi> relative gap"});

    rep.checks.push_back(check_lfd_identity(ctx, scale));
    rep.checks.push_back(check_generator_equivalence(ctx, scale));
    rep.checks.push_back(check_metric_suite(ctx, scale));
    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_bp(const RunContext& ctx) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "bp");
    AcceptanceScale scale = scale_from_config(ctx.cfg);
    rep.checks.push_back(check_bp_certificates(ctx, scale));

    // one representative search exported with full certificates
    GaugeFunction rho(ctx.fam);
    SampledObjective obj;
    obj.provenance = "bp-subcommand";
    SpaceTimePoint ref{ctx.mu0, 0.5 * (ctx.cfg.t0 + ctx.cfg.T)};
    for (int p = 0; p < 40; ++p)
        obj.points.push_back(SpaceTimePoint{
            sample_random_measure(ctx.grid, derive_seed(ctx.cfg.seed, kStreamBp, 5000 + p), 0.8),
            ctx.cfg.t0 + (ctx.cfg.T - ctx.cfg.t0) * (p % 8) / 8.0});
    for (const auto& z : obj.points) obj.values.push_back(-rho(z, ref));
    const double vmax = *std::max_element(obj.values.begin(), obj.values.end());
    const double vmin = *std::min_element(obj.values.begin(), obj.values.end());
    const double eps = (vmax - obj.values[0]) + 0.1 * (vmax - vmin + 0.01);
    auto res = bp_search(obj, rho, 1.0, eps, 0);

    nlohmann::json j;
    j["limit_index"] = res.limit_index;
    j["center_indices"] = res.center_indices;
    j["stages"] = res.stages;
    j["certificates"] = {{"rho_values", res.certificates.rho_values},
                         {"rho_limits", res.certificates.rho_limits},
                         {"rho_bounds_pass", res.certificates.rho_bounds_pass},
                         {"domination_lhs", res.certificates.dom_lhs},
                         {"domination_rhs", res.certificates.dom_rhs},
                         {"domination_rhs_penalty_route", res.certificates.dom_rhs_penalty},
                         {"domination_pass", res.certificates.domination_pass},
                         {"max_maximality_violation", res.certificates.max_maximality_violation},
                         {"maximality_pass", res.certificates.maximality_pass}};
    const fs::path dir(ctx.cfg.out_dir);
    fs::create_directories(dir);
    write_text(dir / "bp_certificates.json", j.dump(2) + "\n");
    rep.artifacts.push_back("bp_certificates.json");

    std::ostringstream csv;
    csv << "k,rho_to_limit,limit\n";
    for (std::size_t k = 0; k < res.certificates.rho_values.size(); ++k)
        csv << k << ',' << res.certificates.rho_values[k] << ',' << res.certificates.rho_limits[k]
            << '\n';
    write_text(dir / "bp_rho_bounds.csv", csv.str());
    rep.artifacts.push_back("bp_rho_bounds.csv");
    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_approx(const RunContext& ctx) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "approx");
    AcceptanceScale scale = scale_from_config(ctx.cfg);
    SolverDiagnostics diag;
    rep.checks.push_back(check_sw_pipeline(ctx, scale, diag));

    // full convergence table for the configured terminal condition
    ComparisonConfig cfg;
    cfg.degrees = {0, 1, 2, 3, 4};
    cfg.training_samples = scale.sw_train;
    cfg.heldout_samples = scale.sw_heldout;
    cfg.solve.paths = scale.sw_paths;
    cfg.solve.dt = ctx.cfg.dt;
    cfg.solve.workers = scale.workers;
    auto pipeline = comparison_pipeline(ctx.phi, ctx.mu0, ctx.cfg.t0, ctx.cfg.T, ctx.ops,
                                        ctx.coeffs, derive_seed(ctx.cfg.seed, kStreamSw, 1), cfg);

    const fs::path dir(ctx.cfg.out_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "degree,u_n,abs_diff,sup_gap_paths,training_sup,heldout_sup,bound_ok\n";
    SvgSeries diff_series{"|u_n - u|", {}, {}, "#d62728"};
    SvgSeries gap_series{"path sup gap", {}, {}, "#1f77b4"};
    for (const auto& row : pipeline.rows) {
        csv << row.degree << ',' << row.u_n << ',' << row.diff << ',' << row.sup_gap_paths << ','
            << row.training_sup << ',' << row.heldout_sup << ',' << (row.bound_ok ? 1 : 0)
            << '\n';
        diff_series.x.push_back(row.degree);
        diff_series.y.push_back(std::max(row.diff, 1e-18));
        gap_series.x.push_back(row.degree);
        gap_series.y.push_back(std::max(row.sup_gap_paths, 1e-18));
    }
    write_text(dir / "approx_convergence.csv", csv.str());
    rep.artifacts.push_back("approx_convergence.csv");
    write_line_chart((dir / "approx_convergence.svg").string(),
                     "polynomial approximation of " + ctx.phi.label(), "degree", "error",
                     {diff_series, gap_series}, /*log_y=*/true);
    rep.artifacts.push_back("approx_convergence.svg");

    bool bounds = true;
    for (const auto& row : pipeline.rows) bounds = bounds && row.bound_ok;
    rep.checks.push_back({"approx-configured-phi", bounds,
                          pipeline.rows.empty() ? 0.0 : pipeline.rows.back().diff, 0.0,
                          "CRN pathwise bound per degree for terminal preset '" + ctx.phi.label() +
                              "'"});
    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_all(const RunContext& ctx, const RunOptions& opts) {
    const auto started = std::chrono::steady_clock::now();
    RunReport rep = new_report(ctx, "all");
    AcceptanceScale scale = scale_from_config(ctx.cfg);
    auto outcome = acceptance_checks(ctx, scale, opts.cli_path);
    rep.checks = std::move(outcome.checks);

    // artifacts: one simulated path pair and the solve estimate
    auto sim = run_simulate(ctx);
    auto solve = run_solve(ctx, RunOptions{});
    for (auto& a : sim.artifacts)
        if (a.find("report.json") == std::string::npos) rep.artifacts.push_back(a);
    for (auto& a : solve.artifacts)
        if (a.find("report.json") == std::string::npos) rep.artifacts.push_back(a);

    finalize_report(rep, ctx, started);
    return rep;
}

RunReport run_subcommand(const std::string& name, const ExperimentConfig& cfg,
                         const RunOptions& opts) {
    RunContext ctx = make_context(cfg);
    if (name == "simulate") return run_simulate(ctx);
    if (name == "solve") return run_solve(ctx, opts);
    if (name == "verify") return run_verify(ctx);
    if (name == "bp") return run_bp(ctx);
    if (name == "approx") return run_approx(ctx);
    if (name == "all") return run_all(ctx, opts);
    throw UsageError("unknown subcommand '" + name + "'");
}

} // namespace kslab
