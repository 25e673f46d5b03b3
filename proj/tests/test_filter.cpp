#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "kslab/filter.hpp"
#include "kslab/rng.hpp"

using namespace kslab;

namespace {

std::shared_ptr<const DomainGrid> torus_grid(int n) {
    return DomainGrid::make(0.0, 1.0, n, BoundaryMode::torus);
}

GridMeasure cosine_bump(std::shared_ptr<const DomainGrid> grid, double center, double amp) {
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

void check_path_invariants(const FilterPath& path) {
    for (const auto& mu : path.snapshots) {
        CHECK(mu.mass_error() <= 1e-12);
        for (double w : mu.weights()) CHECK(w >= 0.0);
    }
}

double sup_diff(const GridMeasure& a, const GridMeasure& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.weights().size(); ++i)
        m = std::max(m, std::abs(a.weights()[i] - b.weights()[i]));
    return m;
}

} // namespace

TEST_CASE("noise paths: count, determinism, refinement coupling") {
    auto p = NoisePath::brownian(42, 0.0, 0.5, 1e-3);
    CHECK(p.steps() == 500);
    auto q = NoisePath::brownian(42, 0.0, 0.5, 1e-3);
    CHECK(p.dI == q.dI);

    auto c = p.coarsened(4);
    CHECK(c.steps() == 125);
    CHECK(c.dt == doctest::Approx(4e-3));
    double s = p.dI[0] + p.dI[1] + p.dI[2] + p.dI[3];
    CHECK(c.dI[0] == doctest::Approx(s).epsilon(1e-15));

    CHECK_THROWS_AS(p.coarsened(3), UsageError); // 500 not divisible by 3
}

TEST_CASE("ks grid solver reduces to Fokker-Planck when h = sigma_bar = 0") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-heat"), grid);
    auto mu0 = sample_random_measure(grid, 3, 5.0);
    const double horizon = 0.24;

    auto oracle = evolve_fokker_planck(ops, mu0, horizon, 4000);
    double errs[2];
    int li = 0;
    for (double dt : {4e-3, 2e-3}) {
        auto noise = NoisePath::brownian(7, 0.0, horizon, dt);
        auto path = solve_ks_grid(mu0, 0.0, ops, noise);
        check_path_invariants(path);
        errs[li++] = sup_diff(path.terminal(), oracle);
    }
    CHECK(errs[1] < 5e-3);
    CHECK(errs[0] / errs[1] == doctest::Approx(2.0).epsilon(0.3)); // O(dt)
}

TEST_CASE("every snapshot keeps unit mass") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto noise = NoisePath::brownian(11, 0.0, 0.2, 1e-3);
    auto path = solve_ks_grid(GridMeasure::uniform(grid), 0.0, ops, noise);
    check_path_invariants(path);
    std::vector<double> ones(static_cast<std::size_t>(grid->size()), 1.0);
    for (const auto& mu : path.snapshots) CHECK(mu.pair(ones) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("one solver step reproduces the weak form exactly against any test function") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = cosine_bump(grid, 0.4, 0.5);
    const double dt = 1e-3, dI = 0.0184;

    KsGridConfig cfg;
    cfg.dt = dt;
    KsGridStepper stepper(ops, mu0, 0.0, cfg);
    const auto w_before = stepper.weights();
    std::vector<double> gain;
    gain_vector(ops, w_before, gain);
    stepper.step(dI);
    REQUIRE(stepper.diag().steps_clipped == 0); // projection inert on this step

    // duality: <w_next, phi> - <w, phi> = dt <w, A phi> + dI (<w, h phi + B phi> - <w, phi><w, h>)
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto phi = grid->sample([s](double x) { return std::cos(2.0 * M_PI * (s + 1) * x + 0.2 * s); });
        const auto a_phi = ops.a_op.apply(phi);
        const auto b_phi = ops.b_op.apply(phi);
        double lhs = 0.0, w_phi = 0.0, w_aphi = 0.0, w_hphi = 0.0, w_bphi = 0.0, w_h = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            lhs += (stepper.weights()[i] - w_before[i]) * phi[i];
            w_phi += w_before[i] * phi[i];
            w_aphi += w_before[i] * a_phi[i];
            w_hphi += w_before[i] * ops.fields.h[i] * phi[i];
            w_bphi += w_before[i] * b_phi[i];
            w_h += w_before[i] * ops.fields.h[i];
        }
        const double rhs = dt * w_aphi + dI * (w_hphi + w_bphi - w_phi * w_h);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
    }
}

TEST_CASE("frozen noise leaves the drift-only weight ODE") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = cosine_bump(grid, 0.3, 0.5);
    const double horizon = 0.2;
    auto noise = NoisePath::frozen(0.0, horizon, 1e-3);
    auto path = solve_ks_grid(mu0, 0.0, ops, noise);
    auto ode = rk4_evolve(ops.a_adj, mu0.weights(), horizon, 2000);
    double err = 0.0;
    for (std::size_t i = 0; i < ode.size(); ++i)
        err = std::max(err, std::abs(path.terminal().weights()[i] - ode[i]));
    CHECK(err < 5e-4);
}

TEST_CASE("identical seed and config give bit-identical paths") {
    auto grid = torus_grid(32);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = sample_random_measure(grid, 5, 2.0);
    auto noise = NoisePath::brownian(99, 0.0, 0.1, 1e-3);
    auto a = solve_ks_grid(mu0, 0.0, ops, noise);
    auto b = solve_ks_grid(mu0, 0.0, ops, noise);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t k = 0; k < a.snapshots.size(); ++k)
        CHECK(a.snapshots[k].weights() == b.snapshots[k].weights());
}

TEST_CASE("stability bound is enforced and instability is detected") {
    auto grid = torus_grid(128);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = GridMeasure::uniform(grid);
    const double bound = stability_dt_bound(ops);
    CHECK(bound < 2e-3);
    auto noise = NoisePath::brownian(1, 0.0, 4.0, 50.0 * bound);
    KsGridConfig strict;
    CHECK_THROWS_AS(solve_ks_grid(mu0, 0.0, ops, noise, strict), UsageError);

    KsGridConfig forced;
    forced.enforce_stability = false;
    // a point mass amplifies the unstable mode past the |w| guard immediately
    auto spike = GridMeasure::dirac(grid, 0.5);
    CHECK_THROWS_AS(solve_ks_grid(spike, 0.0, ops, noise, forced), SolverError);
}

TEST_CASE("ellipticity is validated at solver entry") {
    auto grid = DomainGrid::make(0.0, 1.0, 32, BoundaryMode::reflecting);
    auto ops = build_operators(coefficients_preset("pinned-box"), grid);
    auto noise = NoisePath::brownian(1, 0.0, 0.05, 1e-4);
    CHECK_THROWS_AS(solve_ks_grid(GridMeasure::uniform(grid), 0.0, ops, noise), UsageError);
}

TEST_CASE("particle filter: no information keeps weights uniform, ensemble tracks FP oracle") {
    auto grid = torus_grid(64);
    auto coeffs = coefficients_preset("torus-heat");
    auto ops = build_operators(coeffs, grid);
    auto mu0 = cosine_bump(grid, 0.5, 0.6);
    const double horizon = 0.25;
    auto oracle = evolve_fokker_planck(ops, mu0, horizon, 2000);
    auto fam = MetricFamily::cosine(grid, 12);

    std::vector<double> counts = {200, 800, 3200};
    std::vector<double> errs;
    for (double mp : counts) {
        double acc = 0.0;
        const int reps = 4;
        for (int r = 0; r < reps; ++r) {
            ParticleConfig cfg;
            cfg.count = static_cast<int>(mp);
            cfg.dt = 2e-3;
            auto path = solve_particle_filter(mu0, 0.0, coeffs, grid,
                                              derive_seed(17, 100, static_cast<std::uint64_t>(r)),
                                              cfg, horizon);
            check_path_invariants(path);
            CHECK(path.diag.resample_count == 0); // uniform weights, no resampling
            CHECK(path.diag.min_ess == doctest::Approx(1.0));
            acc += fam.d2(path.terminal(), oracle);
        }
        errs.push_back(acc / reps);
    }
    // Monte Carlo rate: log error vs log count slope near -1/2
    const double slope = (std::log(errs[2]) - std::log(errs[0])) /
                         (std::log(counts[2]) - std::log(counts[0]));
    CHECK(slope < -0.3);
    CHECK(slope > -0.75);
}

TEST_CASE("particle filter: deterministic signal with no information concentrates on the draw") {
    auto grid = torus_grid(64);
    Coefficients c;
    c.name = "still";
    c.b = [](double) { return 0.0; };
    c.sigma = [](double) { return 0.0; };
    c.sigma_bar = [](double) { return 0.0; };
    c.h = [](double) { return 0.0; };
    auto mu0 = sample_random_measure(grid, 23, 1.0);
    ParticleConfig cfg;
    cfg.count = 4000;
    cfg.dt = 5e-3;
    auto path = solve_particle_filter(mu0, 0.0, c, grid, 31, cfg, 0.2);

    auto xs = grid->sample([](double x) { return x; });
    const double m1 = mu0.pair(xs);
    double var = 0.0;
    for (int i = 0; i < grid->size(); ++i)
        var += mu0.weights()[static_cast<std::size_t>(i)] * (grid->point(i) - m1) *
               (grid->point(i) - m1);
    const double tol = 3.0 * std::sqrt(var / cfg.count);
    CHECK(std::abs(path.terminal().pair(xs) - m1) <= tol);
    // frozen particles: terminal binned ensemble equals the initial one
    CHECK(sup_diff(path.terminal(), path.snapshots[1]) == 0.0);
}

TEST_CASE("particle ensemble: normalization, ESS and systematic resampling") {
    ParticleEnsemble ens({0.1, 0.2, 0.3, 0.4}, 0.5);
    CHECK(ens.count() == 4);
    CHECK(ens.normalize() == doctest::Approx(4.0)); // uniform weights

    // pile log-weight onto one particle: ESS collapses toward 1
    ens.add_log_weight(2, 8.0);
    const double ess = ens.normalize();
    CHECK(ess < 1.1);
    CHECK(ens.needs_resample(ess));

    ens.resample_systematic(0.37);
    CHECK(ens.count() == 4);
    for (double x : ens.positions()) CHECK(x == 0.3); // clones of the heavy particle
    CHECK(ens.normalize() == doctest::Approx(4.0));   // weights reset to uniform

    CHECK_THROWS_AS(ParticleEnsemble({0.5}, 0.5), UsageError);
    CHECK_THROWS_AS(ParticleEnsemble({0.1, 0.2}, 1.5), UsageError);
}

TEST_CASE("particle filter weight collapse raises a solver error") {
    auto grid = torus_grid(32);
    Coefficients c = coefficients_preset("torus-ou", {{"obs_gain", 60.0}});
    c.h_bound = 60.0;
    ParticleConfig cfg;
    cfg.count = 2;
    cfg.dt = 1e-2;
    cfg.ess_threshold = 0.0; // never resample, force collapse
    CHECK_THROWS_AS(
        solve_particle_filter(GridMeasure::uniform(grid), 0.0, c, grid, 5, cfg, 0.5),
        SolverError);
}

TEST_CASE("cross-solver agreement on the first two moments") {
    auto grid = torus_grid(64);
    auto coeffs = coefficients_preset("torus-ou");
    auto ops = build_operators(coeffs, grid);
    auto mu0 = cosine_bump(grid, 0.35, 0.5);
    const double horizon = 0.3;
    const int replicas = 40;

    auto xs = grid->sample([](double x) { return x; });
    auto xs2 = grid->sample([](double x) { return x * x; });

    for (auto phi : {xs, xs2}) {
        double g_mean = 0.0, g_var = 0.0, p_mean = 0.0, p_var = 0.0;
        std::vector<double> gv, pv;
        for (int r = 0; r < replicas; ++r) {
            auto noise =
                NoisePath::brownian(derive_seed(900, 1, static_cast<std::uint64_t>(r)), 0.0,
                                    horizon, 1e-3);
            auto gp = solve_ks_grid(mu0, 0.0, ops, noise);
            gv.push_back(gp.terminal().pair(phi));

            ParticleConfig cfg;
            cfg.count = 600;
            cfg.dt = 1e-3;
            auto pp = solve_particle_filter(mu0, 0.0, coeffs, grid,
                                            derive_seed(901, 2, static_cast<std::uint64_t>(r)),
                                            cfg, horizon);
            pv.push_back(pp.terminal().pair(phi));
        }
        for (double v : gv) g_mean += v;
        for (double v : pv) p_mean += v;
        g_mean /= replicas;
        p_mean /= replicas;
        for (double v : gv) g_var += (v - g_mean) * (v - g_mean);
        for (double v : pv) p_var += (v - p_mean) * (v - p_mean);
        g_var /= (replicas - 1);
        p_var /= (replicas - 1);
        const double sigma = std::sqrt(g_var / replicas + p_var / replicas);
        CHECK(std::abs(g_mean - p_mean) <= 3.0 * sigma);
    }
}

TEST_CASE("dynkin residual: constants are exact, deterministic case is quadrature-only") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = cosine_bump(grid, 0.4, 0.4);

    DynkinOptions opts;
    opts.paths = 16;
    opts.fine_dt = 1e-3;
    opts.seed = 3;
    std::vector<double> ones(static_cast<std::size_t>(grid->size()), 1.0);
    auto res = dynkin_residual(ops, ones, mu0, 0.2, opts);
    CHECK(res.residual <= 1e-13);

    auto heat_ops = build_operators(coefficients_preset("torus-heat"), grid);
    auto phi = grid->sample([](double x) { return std::sin(2.0 * M_PI * x); });
    DynkinOptions det;
    det.paths = 4;
    det.fine_dt = 1e-3;
    det.seed = 5;
    auto hres = dynkin_residual(heat_ops, phi, mu0, 0.2, det);
    CHECK(hres.residual < 1e-4);
    CHECK(hres.std_error < 1e-12); // no randomness reaches the statistic
}

TEST_CASE("dynkin residual shrinks at first order under dt refinement") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = cosine_bump(grid, 0.4, 0.5);
    auto phi = grid->sample([](double x) { return std::sin(2.0 * M_PI * x) + 0.3 * x; });

    double residuals[3];
    int li = 0;
    for (int factor : {4, 2, 1}) {
        DynkinOptions opts;
        opts.paths = 300;
        opts.fine_dt = 1e-3;
        opts.coarsen = factor;
        opts.seed = 12; // identical fine paths across levels
        auto res = dynkin_residual(ops, phi, mu0, 0.2, opts);
        residuals[li++] = res.residual;
    }
    CHECK(residuals[0] / residuals[1] == doctest::Approx(2.0).epsilon(0.45));
    CHECK(residuals[1] / residuals[2] == doctest::Approx(2.0).epsilon(0.45));
}

TEST_CASE("ito residual: constants vanish, linear functionals telescope exactly") {
    auto grid = torus_grid(64);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto mu0 = GridMeasure::uniform(grid);
    auto noise = NoisePath::brownian(21, 0.0, 0.2, 1e-3);
    auto path = solve_ks_grid(mu0, 0.0, ops, noise);

    CHECK(ito_residual(ops, cyl_constant(3.7), path, noise) == 0.0);

    auto lin = cyl_linear(smooth_cos(2.0 * M_PI));
    REQUIRE(path.diag.steps_clipped == 0); // projection never fired on this run
    CHECK(ito_residual(ops, lin, path, noise) <= 1e-12);
}

TEST_CASE("ito residual of a squared moment halves with dt under realized quadratic variation") {
    auto grid = torus_grid(64);
    // strong observation gain makes the quadratic-variation surprise visible
    // in the plain-dt discretization
    auto ops = build_operators(coefficients_preset("torus-ou", {{"obs_gain", 2.0}}), grid);
    auto mu0 = cosine_bump(grid, 0.45, 0.4);
    auto u = cyl_moment_power(smooth_cos(2.0 * M_PI), 2);
    const int n_paths = 48;

    double rms[2] = {0.0, 0.0};
    double rms_expected_fine = 0.0;
    for (int p = 0; p < n_paths; ++p) {
        auto fine = NoisePath::brownian(derive_seed(500, 3, static_cast<std::uint64_t>(p)), 0.0,
                                        0.25, 1e-3);
        int li = 0;
        for (int factor : {2, 1}) {
            auto noise = fine.coarsened(factor);
            auto path = solve_ks_grid(mu0, 0.0, ops, noise);
            const double r = ito_residual(ops, u, path, noise, QvMode::realized);
            rms[li++] += r * r;
            if (factor == 1) {
                const double re = ito_residual(ops, u, path, noise, QvMode::expected);
                rms_expected_fine += re * re;
            }
        }
    }
    for (double& v : rms) v = std::sqrt(v / n_paths);
    rms_expected_fine = std::sqrt(rms_expected_fine / n_paths);

    CHECK(rms[0] / rms[1] == doctest::Approx(2.0).epsilon(0.35)); // strong first order
    // the dI^2 weighting removes the quadratic-variation surprise that
    // dominates the plain-dt discretization
    CHECK(rms_expected_fine > 3.0 * rms[1]);
}

TEST_CASE("filter path export carries seed and long-format rows") {
    auto grid = torus_grid(16);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto noise = NoisePath::brownian(77, 0.0, 0.01, 1e-3);
    auto path = solve_ks_grid(GridMeasure::uniform(grid), 0.0, ops, noise);

    auto json = to_json(path);
    CHECK(json.find("\"seed\":77") != std::string::npos);
    CHECK(json.find("ks-grid") != std::string::npos);

    std::ostringstream os;
    write_csv(os, path);
    std::istringstream is(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 1 + 11 * 16); // header + (steps+1) snapshots * grid points
}
