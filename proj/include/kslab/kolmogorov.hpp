#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kslab/calculus.hpp"
#include "kslab/filter.hpp"
#include "kslab/measures.hpp"
#include "kslab/model.hpp"

namespace kslab {

/// Value of the measure-space generator L applied to a cylinder functional,
/// reported through two algebraic routes: the compact operator form
///   L F = <mu, A lf F> + 1/2 <mu x mu, (h + B - <mu,h>)^T (h + B - <mu,h>) lf2 F>
/// and the nine-term expansion through the L-derivatives. Both use the
/// functional's analytic spatial derivatives; the <mu x mu, .> pairings are
/// full double sums over the grid.
struct GeneratorBreakdown {
    // compact route
    double compact_first = 0.0;
    double compact_second = 0.0;
    double compact_total = 0.0;
    // expanded route, in the display order of the nine terms
    double drift = 0.0;           // <mu, b d_mu F>
    double diff_sigma = 0.0;      // 1/2 <mu, sigma^2 dx d_mu F>
    double diff_sigma_bar = 0.0;  // 1/2 <mu, sigma_bar^2 dx d_mu F>
    double obs_sq = 0.0;          // 1/2 <mu x mu, lf2 F h h>
    double corr_sq = 0.0;         // 1/2 <mu x mu, d2_mu F sigma_bar sigma_bar>
    double mean_sq = 0.0;         // 1/2 <mu x mu, lf2 F> <mu,h>^2
    double cross_obs_corr = 0.0;  // <mu x mu, h sigma_bar dy lf2 F>
    double cross_obs_mean = 0.0;  // - <mu x mu, lf2 F h> <mu,h>
    double cross_corr_mean = 0.0; // - <mu x mu, sigma_bar dy lf2 F> <mu,h>
    double expanded_total = 0.0;

    double agreement() const; // |compact - expanded| / (1 + |compact|)
};

GeneratorBreakdown generator_apply(const OperatorSet& ops, const CylinderFunctional& f,
                                   const GridMeasure& mu);

/// Terminal condition Phi for the backward equation: either a cylinder
/// functional (derivatives available, generator applicable) or a generic
/// continuous functional of the measure.
class TerminalFunctional {
public:
    static TerminalFunctional cylinder(CylinderFunctional f,
                                       std::optional<double> sup_bound = std::nullopt);
    static TerminalFunctional generic(std::function<double(const GridMeasure&)> f,
                                      std::string label,
                                      std::optional<double> sup_bound = std::nullopt);

    double operator()(const GridMeasure& mu) const;
    bool is_cylinder() const { return cyl_.has_value(); }
    const CylinderFunctional& as_cylinder() const;
    const std::string& label() const { return label_; }
    std::optional<double> sup_bound() const { return sup_bound_; }

private:
    TerminalFunctional() = default;
    std::optional<CylinderFunctional> cyl_;
    std::function<double(const GridMeasure&)> generic_;
    std::string label_;
    std::optional<double> sup_bound_;
};

/// Largest |Phi| over Dirichlet samples plus every Dirac mass; the empirical
/// boundedness check for generic terminal conditions.
double empirical_sup(const TerminalFunctional& phi, std::shared_ptr<const DomainGrid> grid,
                     int samples, std::uint64_t seed);

struct KolmogorovEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int paths = 0;
    std::string solver_tag;
    std::uint64_t seed = 0;
    SolverDiagnostics diag;
};

struct SolveUConfig {
    int paths = 1000;
    double dt = 1e-3;
    std::string solver = "ks-grid"; // or "particle"
    int particles = 2000;
    double ess_threshold = 0.5;
    int workers = 1;
    KsGridConfig grid_solver;
};

/// u(mu, t) = E[Phi(pi_T^{mu,t})] by Monte Carlo over independent filter
/// paths. Identical seeds give identical path sets, so estimates for
/// different Phi share their noise (common random numbers).
KolmogorovEstimate solve_u(const TerminalFunctional& phi, const GridMeasure& mu, double t,
                           double T, const OperatorSet& ops, const Coefficients& coeffs,
                           std::uint64_t seed, const SolveUConfig& cfg);

/// Terminal measures of the M solver paths used by solve_u, in path order
/// (the common-random-number backbone for comparisons). When `diag` is
/// given, the per-path solver diagnostics are merged into it.
std::vector<GridMeasure> terminal_ensemble(const GridMeasure& mu, double t, double T,
                                           const OperatorSet& ops, const Coefficients& coeffs,
                                           std::uint64_t seed, const SolveUConfig& cfg,
                                           SolverDiagnostics* diag = nullptr);

/// Signal semigroup oracle: integrates d psi / ds = A psi with RK4 on the
/// operator stencil, so <mu, psi(T - t)> = E[phi(X_T) | X_t ~ mu] up to the
/// shared spatial discretization.
std::vector<double> signal_semigroup(const OperatorSet& ops, std::span<const double> phi,
                                     double horizon, int steps);

struct MartingaleResult {
    double residual = 0.0;
    double std_error = 0.0; // combined: outer spread + direct-estimate error
    double outer_mean = 0.0;
    double direct_value = 0.0;
    int outer_paths = 0, inner_paths = 0;
};

/// Nested Monte Carlo check of E[u(pi_s^{mu,t}, s)] = u(mu, t) for t < s <= T.
MartingaleResult martingale_residual(const TerminalFunctional& phi, const GridMeasure& mu,
                                     double t, double s, double T, const OperatorSet& ops,
                                     const Coefficients& coeffs, std::uint64_t seed, int outer,
                                     int inner, const SolveUConfig& cfg);

struct ExpScalePoint {
    double t = 0.0;
    double eps = 0.0;               // time half-width of the central difference
    double u_minus = 0.0, u0 = 0.0, u_plus = 0.0; // u at t - eps, t, t + eps (CRN)
    std::optional<double> lu;       // L u(mu, t) when computable
};

struct ExpScaleResult {
    double scaled_value = 0.0;            // e^{lambda t} u(mu, t)
    std::optional<double> lambda_residual; // d_t u^lambda + L u^lambda - lambda u^lambda
};

/// Exponential scaling u^lambda = e^{lambda t} u and the residual of the
/// lambda-equation it solves, with the time derivative taken by central
/// difference on the supplied common-random-number surface values.
ExpScaleResult exp_scale(const ExpScalePoint& point, double lambda);

} // namespace kslab
