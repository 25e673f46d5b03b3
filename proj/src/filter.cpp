#include "kslab/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "kslab/parallel.hpp"
#include "kslab/rng.hpp"
#include "json.hpp"

namespace kslab {

namespace {
// rng stream ids of the reproducibility contract
constexpr std::uint64_t kStreamNoise = 5;
constexpr std::uint64_t kStreamData = 11;
constexpr std::uint64_t kStreamInit = 12;
constexpr std::uint64_t kStreamProp = 13;
constexpr std::uint64_t kStreamResample = 14;
} // namespace

NoisePath NoisePath::brownian(std::uint64_t seed, double t0, double T, double dt) {
    if (!(T > t0)) throw UsageError("NoisePath: need T > t0");
    if (!(dt > 0.0)) throw UsageError("NoisePath: need dt > 0");
    NoisePath p;
    p.seed = seed;
    p.t0 = t0;
    p.T = T;
    p.dt = dt;
    const int n = static_cast<int>(std::ceil((T - t0) / dt - 1e-9));
    auto rng = make_rng(derive_seed(seed, kStreamNoise));
    std::normal_distribution<double> normal(0.0, std::sqrt(dt));
    p.dI.resize(static_cast<std::size_t>(n));
    for (double& x : p.dI) x = normal(rng);
    return p;
}

NoisePath NoisePath::frozen(double t0, double T, double dt) {
    NoisePath p = brownian(0, t0, T, dt);
    std::fill(p.dI.begin(), p.dI.end(), 0.0);
    return p;
}

NoisePath NoisePath::coarsened(int factor) const {
    if (factor < 1) throw UsageError("NoisePath::coarsened: factor must be >= 1");
    if (factor == 1) return *this;
    if (steps() % factor != 0)
        throw UsageError("NoisePath::coarsened: step count not divisible by factor");
    NoisePath p;
    p.seed = seed;
    p.t0 = t0;
    p.T = T;
    p.dt = dt * factor;
    p.dI.resize(dI.size() / static_cast<std::size_t>(factor));
    for (std::size_t i = 0; i < p.dI.size(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < factor; ++j) acc += dI[i * static_cast<std::size_t>(factor) + j];
        p.dI[i] = acc;
    }
    return p;
}

void SolverDiagnostics::merge(const SolverDiagnostics& other) {
    max_mass_error = std::max(max_mass_error, other.max_mass_error);
    min_weight = std::min(min_weight, other.min_weight);
    clipped_mass_total += other.clipped_mass_total;
    max_step_clip = std::max(max_step_clip, other.max_step_clip);
    steps_clipped += other.steps_clipped;
    resample_count += other.resample_count;
    if (other.min_ess >= 0.0)
        min_ess = min_ess < 0.0 ? other.min_ess : std::min(min_ess, other.min_ess);
}

void gain_vector(const OperatorSet& ops, std::span<const double> w, std::vector<double>& out) {
    const auto& h = ops.fields.h;
    double m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * h[i];
    out.resize(w.size());
    ops.b_adj.apply(w, out);
    for (std::size_t i = 0; i < w.size(); ++i) out[i] += (h[i] - m) * w[i];
}

double stability_dt_bound(const OperatorSet& ops) {
    double max_a = 0.0;
    for (double a : ops.fields.a) max_a = std::max(max_a, a);
    if (max_a <= 0.0) return std::numeric_limits<double>::infinity();
    const double dx = ops.grid->dx();
    return 0.25 * dx * dx / max_a;
}

KsGridStepper::KsGridStepper(const OperatorSet& ops, const GridMeasure& mu0, double t0,
                             KsGridConfig cfg)
    : ops_(ops), cfg_(cfg), t0_(t0), w_(mu0.weights()) {
    if (!mu0.grid().same_discretization(*ops.grid))
        throw UsageError("KsGridStepper: measure grid does not match operator grid");
    if (!(cfg_.dt > 0.0)) throw UsageError("KsGridStepper: dt must be positive");
    for (double s : ops.fields.sigma)
        if (!(s * s > 0.0))
            throw UsageError("KsGridStepper: sigma^2 vanishes on the grid; "
                             "the ellipticity hypothesis fails for this scenario");
    const double bound = stability_dt_bound(ops);
    if (cfg_.enforce_stability && cfg_.dt > bound * (1.0 + 1e-12))
        throw UsageError("KsGridStepper: dt = " + std::to_string(cfg_.dt) +
                         " exceeds the stability bound 0.25 dx^2 / max(sigma^2 + sigma_bar^2) = " +
                         std::to_string(bound) + "; reduce dt or override");
    drift_.resize(w_.size());
    gain_.resize(w_.size());
}

void KsGridStepper::step(double dI) {
    ops_.a_adj.apply(w_, drift_);
    gain_vector(ops_, w_, gain_);
    const double dt = cfg_.dt;
    double min_w = 0.0, clipped = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        double v = w_[i] + dt * drift_[i] + dI * gain_[i];
        if (std::abs(v) > cfg_.instability_threshold)
            throw SolverError("ks-grid solver unstable at t = " + std::to_string(time()) +
                              " (|w| = " + std::to_string(std::abs(v)) +
                              "); reduce dt below the stability bound");
        min_w = std::min(min_w, v);
        if (v < 0.0) {
            clipped -= v;
            v = 0.0;
        }
        w_[i] = v;
        sum += v;
    }
    if (!(sum > 0.0))
        throw SolverError("ks-grid solver lost all mass at t = " + std::to_string(time()));
    for (double& v : w_) v /= sum;
    double mass = std::accumulate(w_.begin(), w_.end(), 0.0);
    diag_.max_mass_error = std::max(diag_.max_mass_error, std::abs(mass - 1.0));
    diag_.min_weight = std::min(diag_.min_weight, min_w);
    diag_.clipped_mass_total += clipped;
    diag_.max_step_clip = std::max(diag_.max_step_clip, clipped);
    if (clipped > 0.0) ++diag_.steps_clipped;
    ++k_;
}

GridMeasure KsGridStepper::measure() const { return GridMeasure(ops_.grid, w_); }

FilterPath solve_ks_grid(const GridMeasure& mu0, double t0, const OperatorSet& ops,
                         const NoisePath& noise, KsGridConfig cfg) {
    cfg.dt = noise.dt;
    KsGridStepper stepper(ops, mu0, t0, cfg);
    FilterPath path;
    path.solver_tag = "ks-grid";
    path.seed = noise.seed;
    path.dt = noise.dt;
    path.times.reserve(noise.dI.size() + 1);
    path.snapshots.reserve(noise.dI.size() + 1);
    path.times.push_back(t0);
    path.snapshots.push_back(mu0);
    for (double dI : noise.dI) {
        stepper.step(dI);
        path.times.push_back(stepper.time());
        path.snapshots.push_back(stepper.measure());
    }
    path.diag = stepper.diag();
    return path;
}

GridMeasure evolve_fokker_planck(const OperatorSet& ops, const GridMeasure& mu0, double time,
                                 int steps) {
    auto w = rk4_evolve(ops.a_adj, mu0.weights(), time, steps);
    double sum = 0.0;
    for (double& v : w) {
        if (v < 0.0) v = 0.0;
        sum += v;
    }
    for (double& v : w) v /= sum;
    return GridMeasure(ops.grid, std::move(w));
}

namespace {

double fold_position(double x, const DomainGrid& grid) {
    const double lo = grid.lower(), hi = grid.upper(), len = hi - lo;
    if (grid.boundary() == BoundaryMode::torus) {
        double y = std::fmod(x - lo, len);
        if (y < 0.0) y += len;
        return lo + y;
    }
    // reflecting: fold until inside
    double y = x;
    while (y < lo || y > hi) {
        if (y < lo) y = 2.0 * lo - y;
        if (y > hi) y = 2.0 * hi - y;
    }
    return y;
}

double sample_from_measure(const GridMeasure& mu, double u) {
    const auto& w = mu.weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u <= acc) return mu.grid().point(static_cast<int>(i));
    }
    return mu.grid().point(mu.size() - 1);
}

GridMeasure bin_particles(std::shared_ptr<const DomainGrid> grid, std::span<const double> x,
                          std::span<const double> weight) {
    const int n = grid->size();
    const double lo = grid->lower(), dx = grid->dx();
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double rel = (x[j] - lo) / dx;
        int i0 = static_cast<int>(std::floor(rel));
        double frac = rel - i0;
        int i1;
        if (grid->boundary() == BoundaryMode::torus) {
            i0 %= n;
            if (i0 < 0) i0 += n;
            i1 = (i0 + 1) % n;
        } else {
            if (i0 < 0) { i0 = 0; frac = 0.0; }
            if (i0 >= n - 1) { i0 = n - 2; frac = 1.0; }
            i1 = i0 + 1;
        }
        w[static_cast<std::size_t>(i0)] += weight[j] * (1.0 - frac);
        w[static_cast<std::size_t>(i1)] += weight[j] * frac;
    }
    double sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= sum;
    return GridMeasure(std::move(grid), std::move(w));
}

} // namespace

ParticleEnsemble::ParticleEnsemble(std::vector<double> positions, double ess_threshold)
    : x_(std::move(positions)), logw_(x_.size(), 0.0),
      w_(x_.size(), x_.empty() ? 0.0 : 1.0 / static_cast<double>(x_.size())),
      ess_threshold_(ess_threshold) {
    if (x_.size() < 2) throw UsageError("ParticleEnsemble: need at least 2 particles");
    if (ess_threshold_ < 0.0 || ess_threshold_ > 1.0)
        throw UsageError("ParticleEnsemble: ESS threshold must lie in [0, 1]");
}

double ParticleEnsemble::normalize() {
    const double mx = *std::max_element(logw_.begin(), logw_.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < w_.size(); ++j) {
        w_[j] = std::exp(logw_[j] - mx);
        sum += w_[j];
    }
    double sum_sq = 0.0;
    for (double& v : w_) {
        v /= sum;
        sum_sq += v * v;
    }
    return 1.0 / sum_sq;
}

void ParticleEnsemble::resample_systematic(double u0) {
    const int m = count();
    std::vector<double> xs(static_cast<std::size_t>(m));
    double cum = w_[0];
    int i = 0;
    for (int j = 0; j < m; ++j) {
        const double target = (u0 + static_cast<double>(j)) / m;
        while (cum < target && i + 1 < m) cum += w_[static_cast<std::size_t>(++i)];
        xs[static_cast<std::size_t>(j)] = x_[static_cast<std::size_t>(i)];
    }
    x_.swap(xs);
    std::fill(logw_.begin(), logw_.end(), 0.0);
    std::fill(w_.begin(), w_.end(), 1.0 / m);
}

FilterPath solve_particle_filter(const GridMeasure& mu0, double t0, const Coefficients& coeffs,
                                 std::shared_ptr<const DomainGrid> grid, std::uint64_t seed,
                                 const ParticleConfig& cfg, double T) {
    if (cfg.count < 2) throw UsageError("solve_particle_filter: need at least 2 particles");
    if (!(cfg.dt > 0.0)) throw UsageError("solve_particle_filter: dt must be positive");
    if (!mu0.grid().same_discretization(*grid))
        throw UsageError("solve_particle_filter: measure grid does not match target grid");
    const int n_steps = static_cast<int>(std::ceil((T - t0) / cfg.dt - 1e-9));
    const int m = cfg.count;
    const double dt = cfg.dt, sq_dt = std::sqrt(dt);

    auto rng_data = make_rng(derive_seed(seed, kStreamData));
    auto rng_init = make_rng(derive_seed(seed, kStreamInit));
    auto rng_prop = make_rng(derive_seed(seed, kStreamProp));
    auto rng_resample = make_rng(derive_seed(seed, kStreamResample));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // hidden signal and observation increments, sharing the W noise
    double x_signal = sample_from_measure(mu0, unif(rng_data));
    std::vector<double> dY(static_cast<std::size_t>(n_steps));
    for (int k = 0; k < n_steps; ++k) {
        const double dB = sq_dt * gauss(rng_data);
        const double dW = sq_dt * gauss(rng_data);
        dY[static_cast<std::size_t>(k)] = coeffs.h(x_signal) * dt + dW;
        x_signal = fold_position(x_signal + coeffs.b(x_signal) * dt + coeffs.sigma(x_signal) * dB +
                                     coeffs.sigma_bar(x_signal) * dW,
                                 *grid);
    }

    std::vector<double> x0(static_cast<std::size_t>(m));
    for (double& xi : x0) xi = sample_from_measure(mu0, unif(rng_init));
    ParticleEnsemble ensemble(std::move(x0), cfg.ess_threshold);

    FilterPath path;
    path.solver_tag = "particle";
    path.seed = seed;
    path.dt = dt;
    path.times.push_back(t0);
    path.snapshots.push_back(mu0); // pi_{t0} is the initial condition itself
    path.diag.min_ess = 1.0;

    for (int k = 0; k < n_steps; ++k) {
        const double dy = dY[static_cast<std::size_t>(k)];
        auto& x = ensemble.positions();
        for (int j = 0; j < m; ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            const double xj = x[js];
            const double hj = coeffs.h(xj);
            ensemble.add_log_weight(j, hj * dy - 0.5 * hj * hj * dt);
            const double dB = sq_dt * gauss(rng_prop);
            // reference-measure dynamics: the sigma_bar correction rides on the
            // observed increments, not on the weights
            x[js] = fold_position(xj + (coeffs.b(xj) - coeffs.sigma_bar(xj) * hj) * dt +
                                      coeffs.sigma(xj) * dB + coeffs.sigma_bar(xj) * dy,
                                  *grid);
        }
        const double ess = ensemble.normalize();
        path.diag.min_ess = std::min(path.diag.min_ess, ess / m);
        if (ess < 2.0)
            throw SolverError("particle filter weight collapse at step " + std::to_string(k) +
                              ": ESS = " + std::to_string(ess) + " of " + std::to_string(m) +
                              " particles; increase the ensemble or shrink dt");
        if (ensemble.needs_resample(ess)) {
            ensemble.resample_systematic(unif(rng_resample));
            ++path.diag.resample_count;
        }
        path.times.push_back(t0 + (k + 1) * dt);
        path.snapshots.push_back(bin_particles(grid, ensemble.positions(), ensemble.weights()));
        path.diag.max_mass_error =
            std::max(path.diag.max_mass_error, path.snapshots.back().mass_error());
    }
    return path;
}

DynkinResult dynkin_residual(const OperatorSet& ops, std::span<const double> phi,
                             const GridMeasure& mu0, double t, const DynkinOptions& opts) {
    if (opts.paths < 2) throw UsageError("dynkin_residual: need at least 2 paths");
    const auto a_phi = ops.a_op.apply(phi);
    const double dt = opts.fine_dt * opts.coarsen;

    std::vector<double> stats(static_cast<std::size_t>(opts.paths));
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(opts.paths));
    std::vector<double> phi_copy(phi.begin(), phi.end());

    parallel_for(static_cast<std::size_t>(opts.paths), opts.workers, [&](std::size_t j) {
        NoisePath noise =
            NoisePath::brownian(derive_seed(opts.seed, kStreamNoise, j), 0.0, t, opts.fine_dt)
                .coarsened(opts.coarsen);
        KsGridConfig cfg = opts.solver;
        cfg.dt = dt;
        KsGridStepper stepper(ops, mu0, 0.0, cfg);
        std::vector<double> gain;
        const double v0 = mu0.pair(phi_copy);
        double g_prev = mu0.pair(a_phi);
        double trapz = 0.0, mart = 0.0;
        for (double dI : noise.dI) {
            if (opts.control_variate) {
                gain_vector(ops, stepper.weights(), gain);
                double gdot = 0.0;
                for (std::size_t i = 0; i < gain.size(); ++i) gdot += gain[i] * phi_copy[i];
                mart += gdot * dI;
            }
            stepper.step(dI);
            double g = 0.0;
            for (std::size_t i = 0; i < a_phi.size(); ++i)
                g += stepper.weights()[i] * a_phi[i];
            trapz += 0.5 * dt * (g_prev + g);
            g_prev = g;
        }
        double v_end = 0.0;
        for (std::size_t i = 0; i < phi_copy.size(); ++i)
            v_end += stepper.weights()[i] * phi_copy[i];
        stats[j] = v_end - v0 - trapz - mart;
        diags[j] = stepper.diag();
    });

    DynkinResult res;
    res.paths = opts.paths;
    res.dt = dt;
    double mean = 0.0;
    for (double s : stats) mean += s;
    mean /= opts.paths;
    double var = 0.0;
    for (double s : stats) var += (s - mean) * (s - mean);
    var /= (opts.paths - 1);
    res.residual = std::abs(mean);
    res.std_error = std::sqrt(var / opts.paths);
    for (const auto& d : diags) res.diag.merge(d);
    return res;
}

double ito_residual(const OperatorSet& ops, const CylinderFunctional& u, const FilterPath& path,
                    const NoisePath& noise, QvMode qv) {
    if (path.snapshots.size() != noise.dI.size() + 1)
        throw UsageError("ito_residual: path and noise have inconsistent step counts");
    const int n_inner = u.arity();
    const DomainGrid& grid = *ops.grid;
    std::vector<std::vector<double>> phi(static_cast<std::size_t>(n_inner));
    for (int a = 0; a < n_inner; ++a) phi[static_cast<std::size_t>(a)] = u.inner_samples(grid, a, 0);

    double drift = 0.0, quad = 0.0, mart = 0.0;
    std::vector<double> gain, hess, p(static_cast<std::size_t>(n_inner));
    const double dt = path.dt;
    for (std::size_t k = 0; k < noise.dI.size(); ++k) {
        const GridMeasure& mu = path.snapshots[k];
        const auto& w = mu.weights();
        const auto lf = u.lf_samples(mu, /*centered=*/false);
        const auto a_lf = ops.a_op.apply(lf);
        double d = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) d += w[i] * a_lf[i];
        drift += dt * d;

        gain_vector(ops, w, gain);
        double g = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) g += gain[i] * lf[i];
        mart += g * noise.dI[k];

        // <pi x pi, (h + B - <pi,h>)^2 lf2> contracted through the gain vector
        u.hessian_at(u.moments(mu), hess);
        for (int a = 0; a < n_inner; ++a) {
            double acc = 0.0;
            const auto& pa = phi[static_cast<std::size_t>(a)];
            for (std::size_t i = 0; i < w.size(); ++i) acc += gain[i] * pa[i];
            p[static_cast<std::size_t>(a)] = acc;
        }
        double q = 0.0;
        for (int a = 0; a < n_inner; ++a)
            for (int b = 0; b < n_inner; ++b)
                q += hess[static_cast<std::size_t>(a * n_inner + b)] *
                     p[static_cast<std::size_t>(a)] * p[static_cast<std::size_t>(b)];
        const double weight = qv == QvMode::realized ? noise.dI[k] * noise.dI[k] : dt;
        quad += 0.5 * q * weight;
    }
    return std::abs(u.value(path.snapshots.back()) - u.value(path.snapshots.front()) - drift -
                    quad - mart);
}

std::string to_json(const FilterPath& path) {
    nlohmann::json j;
    j["solver"] = path.solver_tag;
    j["seed"] = path.seed;
    j["dt"] = path.dt;
    j["times"] = path.times;
    const auto& g = path.snapshots.front().grid();
    j["grid"] = {{"lower", g.lower()},
                 {"upper", g.upper()},
                 {"n", g.size()},
                 {"boundary", to_string(g.boundary())}};
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& mu : path.snapshots) snaps.push_back(mu.weights());
    j["snapshots"] = std::move(snaps);
    j["diagnostics"] = {{"max_mass_error", path.diag.max_mass_error},
                        {"clipped_mass_total", path.diag.clipped_mass_total},
                        {"steps_clipped", path.diag.steps_clipped},
                        {"resample_count", path.diag.resample_count}};
    return j.dump();
}

void write_csv(std::ostream& os, const FilterPath& path) {
    os << "t,x,weight\n";
    for (std::size_t k = 0; k < path.snapshots.size(); ++k) {
        const auto& mu = path.snapshots[k];
        for (int i = 0; i < mu.size(); ++i)
            os << path.times[k] << ',' << mu.grid().point(i) << ','
               << mu.weights()[static_cast<std::size_t>(i)] << '\n';
    }
}

} // namespace kslab
