#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kslab/calculus.hpp"
#include "kslab/measures.hpp"
#include "kslab/model.hpp"

namespace kslab {

/// Brownian increments dI_k ~ N(0, dt), reproducible from the seed.
struct NoisePath {
    std::uint64_t seed = 0;
    double t0 = 0.0, T = 0.0, dt = 0.0;
    std::vector<double> dI;

    static NoisePath brownian(std::uint64_t seed, double t0, double T, double dt);
    /// All-zero increments (drift-only evolution).
    static NoisePath frozen(double t0, double T, double dt);
    /// Merge groups of `factor` consecutive increments (refinement coupling).
    NoisePath coarsened(int factor) const;
    int steps() const { return static_cast<int>(dI.size()); }
};

struct SolverDiagnostics {
    double max_mass_error = 0.0;     // |sum w - 1| after renormalization
    double min_weight = 0.0;         // most negative pre-projection weight seen
    double clipped_mass_total = 0.0; // mass removed by the positivity clip
    double max_step_clip = 0.0;
    int steps_clipped = 0;
    int resample_count = 0; // particle solver
    double min_ess = -1.0;  // particle solver, as a fraction of the ensemble
    void merge(const SolverDiagnostics& other);
};

/// Time-indexed trajectory of grid measures for one noise realization.
struct FilterPath {
    std::vector<double> times;
    std::vector<GridMeasure> snapshots;
    std::string solver_tag;
    std::uint64_t seed = 0;
    double dt = 0.0;
    SolverDiagnostics diag;

    const GridMeasure& terminal() const { return snapshots.back(); }
};

std::string to_json(const FilterPath& path);
/// CSV long format: t, x, weight.
void write_csv(std::ostream& os, const FilterPath& path);

/// Innovation gain of the weak Kushner-Stratonovich form in dual variables:
/// gain(w) = (h - <w,h>) .* w + B^T w, so that <gain, phi> reproduces
/// <pi, h phi + B phi> - <pi, phi><pi, h> for every test function phi.
void gain_vector(const OperatorSet& ops, std::span<const double> w, std::vector<double>& out);

/// Explicit Euler step bound 0.25 dx^2 / max(sigma^2 + sigma_bar^2).
double stability_dt_bound(const OperatorSet& ops);

struct KsGridConfig {
    double dt = 1e-3;
    bool enforce_stability = true;
    double instability_threshold = 10.0; // any |w_i| above this aborts the run
};

/// Euler-Maruyama stepper for the dual (adjoint) form of the weak equation:
///   w <- w + dt A^T w + dI [ (h - <w,h>) .* w + B^T w ],
/// followed by clipping negative weights to zero and renormalizing.
class KsGridStepper {
public:
    KsGridStepper(const OperatorSet& ops, const GridMeasure& mu0, double t0, KsGridConfig cfg);

    void step(double dI);
    int steps_taken() const { return k_; }
    double time() const { return t0_ + k_ * cfg_.dt; }
    const std::vector<double>& weights() const { return w_; }
    GridMeasure measure() const;
    const SolverDiagnostics& diag() const { return diag_; }
    const OperatorSet& ops() const { return ops_; }

private:
    const OperatorSet& ops_;
    KsGridConfig cfg_;
    double t0_;
    int k_ = 0;
    std::vector<double> w_, drift_, gain_;
    SolverDiagnostics diag_;
};

FilterPath solve_ks_grid(const GridMeasure& mu0, double t0, const OperatorSet& ops,
                         const NoisePath& noise, KsGridConfig cfg = {});

/// Deterministic Fokker-Planck evolution dw/ds = A^T w (RK4 on the same
/// stencil); the h = sigma_bar = 0 limit of the grid solver.
GridMeasure evolve_fokker_planck(const OperatorSet& ops, const GridMeasure& mu0, double time,
                                 int steps);

struct ParticleConfig {
    int count = 2000;
    double dt = 1e-3;
    double ess_threshold = 0.5; // resample when ESS < threshold * count
};

/// Weighted particle system on K: positions, log-weights and their
/// normalized form, with systematic resampling.
class ParticleEnsemble {
public:
    ParticleEnsemble(std::vector<double> positions, double ess_threshold);

    int count() const { return static_cast<int>(x_.size()); }
    double ess_threshold() const { return ess_threshold_; }
    const std::vector<double>& positions() const { return x_; }
    const std::vector<double>& weights() const { return w_; }
    std::vector<double>& positions() { return x_; }

    void add_log_weight(int j, double delta) { logw_[static_cast<std::size_t>(j)] += delta; }
    /// Renormalizes the weights; returns the effective sample size.
    double normalize();
    bool needs_resample(double ess) const { return ess < ess_threshold_ * count(); }
    /// Systematic (low-variance) resampling; u0 in [0, 1).
    void resample_systematic(double u0);

private:
    std::vector<double> x_, logw_, w_;
    double ess_threshold_;
};

/// Simulates one signal/observation pair (X, Y) sharing the W noise, then
/// runs a weighted particle filter on the observed increments: particles move
/// under the reference dynamics dX = (b - sigma_bar h) dt + sigma dB + sigma_bar dY
/// and carry Girsanov weights exp(h dY - h^2 dt / 2). Snapshots are deposited
/// on the grid by linear binning.
FilterPath solve_particle_filter(const GridMeasure& mu0, double t0, const Coefficients& coeffs,
                                 std::shared_ptr<const DomainGrid> grid, std::uint64_t seed,
                                 const ParticleConfig& cfg, double T);

struct DynkinOptions {
    int paths = 1000;
    double fine_dt = 1e-3; // increments are generated at this resolution
    int coarsen = 1;       // solver step = fine_dt * coarsen (refinement coupling)
    std::uint64_t seed = 1;
    int workers = 1;
    /// subtract the exactly-computable zero-mean martingale term per path
    /// (control variate; leaves the estimated expectation unchanged)
    bool control_variate = true;
    KsGridConfig solver;
};

struct DynkinResult {
    double residual = 0.0;
    double std_error = 0.0;
    int paths = 0;
    double dt = 0.0;
    SolverDiagnostics diag;
};

/// Monte Carlo estimate of |E<pi_t, phi> - <mu0, phi> - E int_0^t <pi_s, A phi> ds|
/// with the time integral by trapezoid on the solver's snapshots.
DynkinResult dynkin_residual(const OperatorSet& ops, std::span<const double> phi,
                             const GridMeasure& mu0, double t, const DynkinOptions& opts);

enum class QvMode {
    realized, // dt-integral of the second-order term weighted by dI_k^2
    expected  // plain dt weights
};

/// Pathwise residual of the Ito expansion of u(pi_t) along one solved path:
/// u(pi_T) - u(pi_0) minus drift, second-order and martingale sums evaluated
/// on the same noise increments.
double ito_residual(const OperatorSet& ops, const CylinderFunctional& u, const FilterPath& path,
                    const NoisePath& noise, QvMode qv = QvMode::realized);

} // namespace kslab
