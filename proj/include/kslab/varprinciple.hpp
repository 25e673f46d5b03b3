#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kslab/calculus.hpp"
#include "kslab/kolmogorov.hpp"
#include "kslab/measures.hpp"

namespace kslab {

struct SpaceTimePoint {
    GridMeasure mu;
    double t = 0.0;
};

/// rho((mu,t),(nu,s)) = (t-s)^2 + d2(mu,nu)^2; vanishes on the diagonal and
/// controls |t-s| + d2 through |t-s| + d2 <= sqrt(2 rho).
class GaugeFunction {
public:
    explicit GaugeFunction(MetricFamily fam) : fam_(std::move(fam)) {}
    double operator()(const SpaceTimePoint& a, const SpaceTimePoint& b) const {
        const double dt = a.t - b.t;
        return dt * dt + fam_.d2sq(a.mu, b.mu);
    }
    const MetricFamily& family() const { return fam_; }

private:
    MetricFamily fam_;
};

/// Finite list of sampled points with objective values; finite samples are
/// trivially upper semicontinuous and bounded above.
struct SampledObjective {
    std::vector<SpaceTimePoint> points;
    std::vector<double> values;
    std::string provenance;
};

/// phi_eps(z) = sum_k 2^{-k} rho(z, z_k) over the realized center sequence;
/// the eventually-constant tail is absorbed into the last weight, so the
/// finite sum equals the infinite series exactly.
class PerturbationSeries {
public:
    PerturbationSeries(GaugeFunction gauge, std::vector<SpaceTimePoint> centers,
                       std::vector<double> weights);

    double value(const SpaceTimePoint& z) const;
    const std::vector<SpaceTimePoint>& centers() const { return centers_; }
    const std::vector<double>& weights() const { return weights_; }
    const GaugeFunction& gauge() const { return gauge_; }

    /// mu -> phi_eps(mu, t) at fixed t as a cylinder functional over the
    /// metric family (inner functions f_k, quadratic outer map).
    CylinderFunctional spatial_cylinder(double t) const;

private:
    GaugeFunction gauge_;
    std::vector<SpaceTimePoint> centers_;
    std::vector<double> weights_;
};

struct BpCertificates {
    std::vector<double> rho_values; // rho(z_bar, z_k) per center
    std::vector<double> rho_limits; // eps / (2^k delta)
    bool rho_bounds_pass = false;
    double dom_lhs = 0.0;        // G(z_0)
    double dom_rhs = 0.0;        // G(z_bar) - delta phi_eps(z_bar), series route
    double dom_rhs_penalty = 0.0; // same via the search's accumulated penalties
    bool domination_pass = false;
    double max_maximality_violation = 0.0;
    bool maximality_pass = false;
    bool all_pass() const { return rho_bounds_pass && domination_pass && maximality_pass; }
};

struct BpResult {
    int limit_index = -1;
    std::vector<int> center_indices;
    int stages = 0;
    PerturbationSeries series;
    BpCertificates certificates;
};

/// Constructive Borwein-Preiss iteration on a finite sampled objective:
/// stage k maximizes G minus the accumulated delta-weighted perturbation and
/// stops when the maximizer repeats. Requires G(start) >= sup G - eps.
/// All three conclusions of the variational principle are checked
/// exhaustively over the sample set and returned as certificates.
BpResult bp_search(const SampledObjective& objective, const GaugeFunction& gauge, double delta,
                   double eps, int start);

/// mu -> d2(mu, mu0)^2 as a cylinder functional over the metric family.
CylinderFunctional d2sq_functional(const MetricFamily& fam, const GridMeasure& mu0);

struct D2sqTermBound {
    int k = 0;
    double lf_sup = 0.0, lf2_sup = 0.0, l1_sup = 0.0, l2_sup = 0.0;
    double lf_limit = 4.0, lf2_limit = 2.0, l1_limit = 0.0, l2_limit = 0.0;
    bool pass = false;
};

struct D2sqDerivatives {
    DerivativeField lf;  // series-summed first derivative field
    DerivativeField lf2; // mu-independent second derivative field
    std::vector<D2sqTermBound> bounds;
    bool bounds_pass = false;
};

/// Series-summed derivative fields of mu -> d2(mu, mu0)^2 with the per-term
/// sup bounds ||lf g_k|| <= 4, ||lf2 g_k|| <= 2, ||d_mu g_k|| <= 4 a_k,
/// ||d2_mu g_k|| <= 2 a_k^2 evaluated exactly over the grid.
D2sqDerivatives d2sq_derivatives(const GridMeasure& mu0, const MetricFamily& fam);

// --- moment polynomials and Stone-Weierstrass fitting ---------------------

/// Monomial in the moment coordinates m_j = <mu, x^j>; powers[j-1] is the
/// exponent of m_j. The weighted degree sum_j j * powers[j-1] grades the
/// nested feature spaces.
struct MomentMonomial {
    std::vector<int> powers;
    int weighted_degree() const;
    double eval(std::span<const double> moments) const;
};

/// All moment monomials of weighted degree <= degree (degree 0 = constant).
std::vector<MomentMonomial> moment_basis(int degree);

class PolynomialFunctional {
public:
    PolynomialFunctional(int degree, std::vector<MomentMonomial> basis,
                         std::vector<double> coeffs);

    double value(const GridMeasure& mu) const;
    int degree() const { return degree_; }
    int max_moment_order() const { return max_order_; }
    const std::vector<MomentMonomial>& basis() const { return basis_; }
    const std::vector<double>& coeffs() const { return coeffs_; }

    /// Representation from the cylinder example: inner functions x^j,
    /// polynomial outer map with analytic gradient and Hessian.
    CylinderFunctional to_cylinder() const;

private:
    int degree_;
    int max_order_;
    std::vector<MomentMonomial> basis_;
    std::vector<double> coeffs_;
};

struct PolyFitReport {
    int degree = 0;
    int n_features = 0;
    int rank = 0;
    bool rank_deficient = false;
    double training_sup_error = 0.0;
    double training_rms_error = 0.0;
    double heldout_sup_error = -1.0; // negative when no held-out set given
    bool reused_lower_degree = false;
};

struct PolyFit {
    PolynomialFunctional fit;
    PolyFitReport report;
};

/// The polynomial re-expressed in the (nested) basis of a higher degree.
PolynomialFunctional embed(const PolynomialFunctional& p, int degree);

/// Least-squares fit of Phi over the moment features up to `degree`
/// (minimum-norm solution; rank deficiency flagged in the report).
/// When `previous` holds the best fit of a lower degree over the SAME
/// training set, the returned fit is the better of the two by training sup
/// error; the nesting of the feature spaces makes the lower-degree candidate
/// a valid degree-n polynomial, so the best-fit training error is
/// non-increasing in degree by construction.
PolyFit poly_fit(const TerminalFunctional& phi, int degree, std::span<const GridMeasure> train,
                 std::span<const GridMeasure> heldout = {}, const PolyFit* previous = nullptr);

struct ComparisonRow {
    int degree = 0;
    double u_n = 0.0;
    double diff = 0.0;           // |u_n - u|
    double sup_gap_paths = 0.0;  // max |Phi_n - Phi| over the CRN terminal measures
    double training_sup = 0.0;
    double heldout_sup = -1.0;
    bool bound_ok = false;       // diff <= sup_gap_paths (pathwise average bound)
    bool rank_deficient = false;
};

struct ComparisonReport {
    double u = 0.0;
    double u_std_error = 0.0;
    int paths = 0;
    std::vector<ComparisonRow> rows;
    SolverDiagnostics diag; // accumulated over every backing solver path
};

struct ComparisonConfig {
    std::vector<int> degrees = {0, 1, 2, 3, 4};
    int training_samples = 500;
    /// of which this many are terminal measures of independent solver paths
    /// (own seed stream), so the fit sees the same distribution it is
    /// evaluated on; the rest are Dirichlet draws
    int path_training_samples = 0;
    int heldout_samples = 200;
    double dirichlet_concentration = 1.0;
    SolveUConfig solve;
};

/// Fits Phi_n per degree, evaluates u_n and u on one common set of solver
/// paths, and checks |u_n - u| <= sup over those paths of |Phi_n - Phi|.
ComparisonReport comparison_pipeline(const TerminalFunctional& phi, const GridMeasure& mu0,
                                     double t0, double T, const OperatorSet& ops,
                                     const Coefficients& coeffs, std::uint64_t seed,
                                     const ComparisonConfig& cfg);

} // namespace kslab
