#include "kslab/kolmogorov.hpp"

#include <algorithm>
#include <cmath>

#include "kslab/parallel.hpp"
#include "kslab/rng.hpp"

namespace kslab {

namespace {
constexpr std::uint64_t kStreamSolveU = 21;
constexpr std::uint64_t kStreamOuter = 22;
constexpr std::uint64_t kStreamInner = 23;
constexpr std::uint64_t kStreamDirect = 24;
constexpr long kNestedBudgetCap = 2'000'000;
} // namespace

double GeneratorBreakdown::agreement() const {
    return std::abs(compact_total - expanded_total) / (1.0 + std::abs(compact_total));
}

GeneratorBreakdown generator_apply(const OperatorSet& ops, const CylinderFunctional& f,
                                   const GridMeasure& mu) {
    if (!mu.grid().same_discretization(*ops.grid))
        throw UsageError("generator_apply: measure grid does not match operator grid");
    const DomainGrid& grid = *ops.grid;
    const std::size_t n = static_cast<std::size_t>(grid.size());
    const std::size_t na = static_cast<std::size_t>(f.arity());
    const auto& w = mu.weights();
    const auto& h = ops.fields.h;
    const auto& sb = ops.fields.sigma_bar;
    const auto& sg = ops.fields.sigma;
    const auto& b = ops.fields.b;

    const auto r = f.moments(mu);
    std::vector<double> c, H;
    f.gradient_at(r, c);
    f.hessian_at(r, H);

    std::vector<std::vector<double>> p0(na), p1(na);
    for (std::size_t a = 0; a < na; ++a) {
        p0[a] = f.inner_samples(grid, static_cast<int>(a), 0);
        p1[a] = f.inner_samples(grid, static_cast<int>(a), 1);
    }

    // first linear-functional derivative field and its spatial derivatives
    std::vector<double> lf(n, 0.0), dlf(n, 0.0), ddlf(n, 0.0);
    f.lf_fields(mu, lf, dlf, ddlf);

    GeneratorBreakdown out;

    // compact first part <mu, A lf> with the analytic derivatives of lf
    const auto a_lf = apply_a_exact(ops, dlf, ddlf);
    for (std::size_t i = 0; i < n; ++i) out.compact_first += w[i] * a_lf[i];

    // second-derivative kernels on the grid:
    //   d2[i][j] = lf2(x_i, x_j), d2y = dy lf2, d2x = dx lf2, d2xy = dx dy lf2
    std::vector<double> d2(n * n, 0.0), d2x(n * n, 0.0), d2y(n * n, 0.0), d2xy(n * n, 0.0);
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t bb = 0; bb < na; ++bb) {
            const double hab = H[a * na + bb];
            if (hab == 0.0) continue;
            const auto& pa0 = p0[a];
            const auto& pa1 = p1[a];
            const auto& pb0 = p0[bb];
            const auto& pb1 = p1[bb];
            for (std::size_t i = 0; i < n; ++i) {
                const double a0 = hab * pa0[i], a1 = hab * pa1[i];
                double* row2 = &d2[i * n];
                double* rowx = &d2x[i * n];
                double* rowy = &d2y[i * n];
                double* rowxy = &d2xy[i * n];
                for (std::size_t j = 0; j < n; ++j) {
                    row2[j] += a0 * pb0[j];
                    rowx[j] += a1 * pb0[j];
                    rowy[j] += a0 * pb1[j];
                    rowxy[j] += a1 * pb1[j];
                }
            }
        }

    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += w[i] * h[i];

    // one pass over the grid square accumulates every <mu x mu, .> pairing
    double sum_cc = 0.0;   // (h-m)(h-m) lf2
    double sum_cby = 0.0;  // (h-m) sigma_bar dy lf2
    double sum_bxc = 0.0;  // sigma_bar (h-m) dx lf2
    double sum_bxby = 0.0; // sigma_bar sigma_bar dx dy lf2
    double sum_hh = 0.0, sum_bb = 0.0, sum_22 = 0.0;
    double sum_h2 = 0.0, sum_by = 0.0, sum_hby = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        const double ci = h[i] - m;
        for (std::size_t j = 0; j < n; ++j) {
            const double wij = wi * w[j];
            const double v2 = d2[i * n + j];
            const double vx = d2x[i * n + j];
            const double vy = d2y[i * n + j];
            const double vxy = d2xy[i * n + j];
            const double cj = h[j] - m;
            sum_cc += wij * ci * cj * v2;
            sum_cby += wij * ci * sb[j] * vy;
            sum_bxc += wij * sb[i] * cj * vx;
            sum_bxby += wij * sb[i] * sb[j] * vxy;
            sum_hh += wij * h[i] * h[j] * v2;
            sum_bb += wij * sb[i] * sb[j] * vxy;
            sum_22 += wij * v2;
            sum_h2 += wij * h[i] * v2;
            sum_by += wij * sb[j] * vy;
            sum_hby += wij * h[i] * sb[j] * vy;
        }
    }

    out.compact_second = 0.5 * (sum_cc + sum_cby + sum_bxc + sum_bxby);
    out.compact_total = out.compact_first + out.compact_second;

    for (std::size_t i = 0; i < n; ++i) {
        out.drift += w[i] * b[i] * dlf[i];
        out.diff_sigma += 0.5 * w[i] * sg[i] * sg[i] * ddlf[i];
        out.diff_sigma_bar += 0.5 * w[i] * sb[i] * sb[i] * ddlf[i];
    }
    out.obs_sq = 0.5 * sum_hh;
    out.corr_sq = 0.5 * sum_bb;
    out.mean_sq = 0.5 * sum_22 * m * m;
    out.cross_obs_corr = sum_hby;
    out.cross_obs_mean = -sum_h2 * m;
    out.cross_corr_mean = -sum_by * m;
    out.expanded_total = out.drift + out.diff_sigma + out.diff_sigma_bar + out.obs_sq +
                         out.corr_sq + out.mean_sq + out.cross_obs_corr + out.cross_obs_mean +
                         out.cross_corr_mean;
    return out;
}

TerminalFunctional TerminalFunctional::cylinder(CylinderFunctional f,
                                                std::optional<double> sup_bound) {
    TerminalFunctional t;
    t.label_ = f.label().empty() ? "cylinder" : f.label();
    t.cyl_ = std::move(f);
    t.sup_bound_ = sup_bound;
    return t;
}

TerminalFunctional TerminalFunctional::generic(std::function<double(const GridMeasure&)> f,
                                               std::string label,
                                               std::optional<double> sup_bound) {
    TerminalFunctional t;
    t.generic_ = std::move(f);
    t.label_ = std::move(label);
    t.sup_bound_ = sup_bound;
    return t;
}

double TerminalFunctional::operator()(const GridMeasure& mu) const {
    return cyl_ ? cyl_->value(mu) : generic_(mu);
}

const CylinderFunctional& TerminalFunctional::as_cylinder() const {
    if (!cyl_) throw UsageError("TerminalFunctional: not a cylinder functional");
    return *cyl_;
}

double empirical_sup(const TerminalFunctional& phi, std::shared_ptr<const DomainGrid> grid,
                     int samples, std::uint64_t seed) {
    double sup = 0.0;
    for (int i = 0; i < grid->size(); ++i)
        sup = std::max(sup, std::abs(phi(GridMeasure::dirac(grid, grid->point(i)))));
    for (int i = 0; i < samples; ++i)
        sup = std::max(sup, std::abs(phi(sample_random_measure(
                                grid, derive_seed(seed, 25, static_cast<std::uint64_t>(i)), 1.0))));
    return sup;
}

namespace {

GridMeasure run_terminal(const GridMeasure& mu, double t, double T, const OperatorSet& ops,
                         const Coefficients& coeffs, std::uint64_t path_seed,
                         const SolveUConfig& cfg, SolverDiagnostics* diag) {
    const double horizon = T - t;
    if (horizon <= 1e-15) return mu;
    if (cfg.solver == "ks-grid") {
        auto noise = NoisePath::brownian(path_seed, t, T, cfg.dt);
        KsGridConfig gcfg = cfg.grid_solver;
        gcfg.dt = cfg.dt;
        KsGridStepper stepper(ops, mu, t, gcfg);
        for (double dI : noise.dI) stepper.step(dI);
        if (diag) diag->merge(stepper.diag());
        return stepper.measure();
    }
    if (cfg.solver == "particle") {
        ParticleConfig pcfg;
        pcfg.count = cfg.particles;
        pcfg.dt = cfg.dt;
        pcfg.ess_threshold = cfg.ess_threshold;
        auto path = solve_particle_filter(mu, t, coeffs, ops.grid, path_seed, pcfg, T);
        if (diag) diag->merge(path.diag);
        return path.terminal();
    }
    throw ConfigError("solve_u: unknown solver tag '" + cfg.solver + "'");
}

} // namespace

KolmogorovEstimate solve_u(const TerminalFunctional& phi, const GridMeasure& mu, double t,
                           double T, const OperatorSet& ops, const Coefficients& coeffs,
                           std::uint64_t seed, const SolveUConfig& cfg) {
    if (cfg.paths < 2) throw UsageError("solve_u: need at least 2 paths");
    if (!(t <= T)) throw UsageError("solve_u: need t <= T");
    std::vector<double> vals(static_cast<std::size_t>(cfg.paths));
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(cfg.paths));
    parallel_for(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t j) {
        try {
            const auto terminal = run_terminal(mu, t, T, ops, coeffs,
                                               derive_seed(seed, kStreamSolveU, j), cfg, &diags[j]);
            vals[j] = phi(terminal);
        } catch (const SolverError& e) {
            throw SolverError("path " + std::to_string(j) + ": " + e.what());
        }
    });
    KolmogorovEstimate est;
    est.paths = cfg.paths;
    est.solver_tag = cfg.solver;
    est.seed = seed;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= cfg.paths;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= (cfg.paths - 1);
    est.value = mean;
    est.std_error = std::sqrt(var / cfg.paths);
    for (const auto& d : diags) est.diag.merge(d);
    return est;
}

std::vector<GridMeasure> terminal_ensemble(const GridMeasure& mu, double t, double T,
                                           const OperatorSet& ops, const Coefficients& coeffs,
                                           std::uint64_t seed, const SolveUConfig& cfg,
                                           SolverDiagnostics* diag) {
    std::vector<GridMeasure> out;
    out.reserve(static_cast<std::size_t>(cfg.paths));
    for (int j = 0; j < cfg.paths; ++j) out.push_back(mu);
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(cfg.paths));
    parallel_for(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t j) {
        out[j] = run_terminal(mu, t, T, ops, coeffs, derive_seed(seed, kStreamSolveU, j), cfg,
                              &diags[j]);
    });
    if (diag)
        for (const auto& d : diags) diag->merge(d);
    return out;
}

std::vector<double> signal_semigroup(const OperatorSet& ops, std::span<const double> phi,
                                     double horizon, int steps) {
    if (horizon <= 0.0) return std::vector<double>(phi.begin(), phi.end());
    return rk4_evolve(ops.a_op, std::vector<double>(phi.begin(), phi.end()), horizon, steps);
}

MartingaleResult martingale_residual(const TerminalFunctional& phi, const GridMeasure& mu,
                                     double t, double s, double T, const OperatorSet& ops,
                                     const Coefficients& coeffs, std::uint64_t seed, int outer,
                                     int inner, const SolveUConfig& cfg) {
    if (!(t < s && s <= T)) throw UsageError("martingale_residual: need t < s <= T");
    if (outer < 2 || inner < 2)
        throw UsageError("martingale_residual: need at least 2 outer and 2 inner paths");
    const long budget = static_cast<long>(outer) * inner;
    if (budget > kNestedBudgetCap) {
        const int o = static_cast<int>(std::sqrt(static_cast<double>(kNestedBudgetCap)));
        throw UsageError("martingale_residual: nested budget " + std::to_string(budget) +
                         " exceeds " + std::to_string(kNestedBudgetCap) + "; try outer = " +
                         std::to_string(o) + ", inner = " + std::to_string(kNestedBudgetCap / o));
    }

    std::vector<double> inner_means(static_cast<std::size_t>(outer));
    parallel_for(static_cast<std::size_t>(outer), cfg.workers, [&](std::size_t j) {
        const auto pi_s = run_terminal(mu, t, s, ops, coeffs, derive_seed(seed, kStreamOuter, j),
                                       cfg, nullptr);
        double acc = 0.0;
        for (int i = 0; i < inner; ++i) {
            const auto terminal =
                run_terminal(pi_s, s, T, ops, coeffs,
                             derive_seed(derive_seed(seed, kStreamInner, j),
                                         kStreamInner, static_cast<std::uint64_t>(i)),
                             cfg, nullptr);
            acc += phi(terminal);
        }
        inner_means[j] = acc / inner;
    });

    MartingaleResult res;
    res.outer_paths = outer;
    res.inner_paths = inner;
    double mean = 0.0;
    for (double v : inner_means) mean += v;
    mean /= outer;
    double var = 0.0;
    for (double v : inner_means) var += (v - mean) * (v - mean);
    var /= (outer - 1);
    res.outer_mean = mean;

    const auto direct = solve_u(phi, mu, t, T, ops, coeffs, derive_seed(seed, kStreamDirect), cfg);
    res.direct_value = direct.value;
    res.residual = std::abs(mean - direct.value);
    res.std_error = std::sqrt(var / outer + direct.std_error * direct.std_error);
    return res;
}

ExpScaleResult exp_scale(const ExpScalePoint& p, double lambda) {
    if (lambda < 0.0) throw UsageError("exp_scale: lambda must be >= 0");
    ExpScaleResult out;
    out.scaled_value = std::exp(lambda * p.t) * p.u0;
    if (p.lu.has_value() && p.eps > 0.0) {
        const double dt_term = (std::exp(lambda * (p.t + p.eps)) * p.u_plus -
                                std::exp(lambda * (p.t - p.eps)) * p.u_minus) /
                               (2.0 * p.eps);
        const double scale = std::exp(lambda * p.t);
        out.lambda_residual = dt_term + scale * (*p.lu) - lambda * scale * p.u0;
    }
    return out;
}

} // namespace kslab
