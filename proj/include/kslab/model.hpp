#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kslab/calculus.hpp"
#include "kslab/measures.hpp"

namespace kslab {

/// Scalar model fields b, sigma, sigma_bar, h on K together with the
/// declared sup bounds and Lipschitz constants they are checked against.
struct Coefficients {
    std::string name;
    std::function<double(double)> b, sigma, sigma_bar, h;
    double b_bound = 0.0, sigma_bound = 0.0, sigma_bar_bound = 0.0, h_bound = 0.0;
    double b_lip = 0.0, sigma_lip = 0.0, sigma_bar_lip = 0.0;
};

/// Named presets used by the CLI and the test scenarios. Parameters not
/// present in `params` keep their preset defaults.
///   torus-ou:    periodic drift toward `center`, constant sigma/sigma_bar,
///                cosine observation field (torus scenario; hypotheses hold).
///   torus-heat:  pure diffusion, h = 0 (deterministic Fokker-Planck limit).
///   pinned-box:  coefficients vanishing at the endpoints of the box, used
///                to exercise the boundary-invariance checker.
Coefficients coefficients_preset(const std::string& name,
                                 const std::map<std::string, double>& params = {});

/// Tridiagonal stencil with optional periodic corner entries (torus wrap).
class TriStencil {
public:
    TriStencil(int n, bool wrap);

    int size() const { return n_; }
    bool wrap() const { return wrap_; }

    double& sub(int i) { return sub_[static_cast<std::size_t>(i)]; }
    double& diag(int i) { return diag_[static_cast<std::size_t>(i)]; }
    double& sup(int i) { return sup_[static_cast<std::size_t>(i)]; }
    double sub(int i) const { return sub_[static_cast<std::size_t>(i)]; }
    double diag(int i) const { return diag_[static_cast<std::size_t>(i)]; }
    double sup(int i) const { return sup_[static_cast<std::size_t>(i)]; }
    /// wrap-around entries (row 0, col n-1) and (row n-1, col 0)
    double& corner_lo() { return corner_lo_; }
    double& corner_hi() { return corner_hi_; }
    double corner_lo() const { return corner_lo_; }
    double corner_hi() const { return corner_hi_; }

    void apply(std::span<const double> in, std::span<double> out) const;
    std::vector<double> apply(std::span<const double> in) const;

    /// Exact transpose (the discrete adjoint used by the dual-form solver).
    TriStencil transposed() const;

private:
    int n_;
    bool wrap_;
    std::vector<double> sub_, diag_, sup_;
    double corner_lo_ = 0.0, corner_hi_ = 0.0;
};

/// Grid samples of the model fields; a = sigma^2 + sigma_bar^2.
struct CoefficientSamples {
    std::vector<double> b, sigma, sigma_bar, h, a;
};

/// A, B stencils for one (coefficients, grid) pair plus their exact
/// transposes and the sampled fields. Immutable after construction.
struct OperatorSet {
    std::shared_ptr<const DomainGrid> grid;
    CoefficientSamples fields;
    TriStencil a_op, b_op;   // A phi = b phi' + a/2 phi'', B phi = sigma_bar phi'
    TriStencil a_adj, b_adj; // exact transposes
};

OperatorSet build_operators(const Coefficients& coeffs, std::shared_ptr<const DomainGrid> grid);

/// Finite-difference action of A (central differences inside; boundary rows
/// per boundary mode: wraparound for torus, one-sided drift with reflected
/// ghost for reflecting).
std::vector<double> apply_a(const OperatorSet& ops, std::span<const double> phi);
std::vector<double> apply_b(const OperatorSet& ops, std::span<const double> phi);

/// Exact action of A and B on a function with known derivative samples:
/// A phi = b dphi + a/2 ddphi, B phi = sigma_bar dphi. Used where spatial
/// discretization error must not enter (generator identities).
std::vector<double> apply_a_exact(const OperatorSet& ops, std::span<const double> dphi,
                                  std::span<const double> ddphi);
std::vector<double> apply_b_exact(const OperatorSet& ops, std::span<const double> dphi);

/// RK4 integration of the linear system dv/ds = L v over `time`.
std::vector<double> rk4_evolve(const TriStencil& L, std::vector<double> v, double time, int steps);

struct HypothesisEntry {
    std::string name;
    double observed = 0.0;
    double declared = 0.0;
    bool pass = false;
};

struct HypothesisReport {
    std::vector<HypothesisEntry> bounds;     // sup over grid vs declared bound
    std::vector<HypothesisEntry> lipschitz;  // max difference quotient vs declared
    double min_sigma_sq = 0.0;               // ellipticity in d = 1
    bool ellipticity_pass = false;
    bool pass = false;
};

HypothesisReport check_hypotheses(const Coefficients& coeffs, const DomainGrid& grid);

struct InvarianceEndpoint {
    double x = 0.0;
    double normal = 0.0;       // outward normal, -1 at lower / +1 at upper
    double a_value = 0.0;      // a(x) nu^2, must vanish for degeneracy
    bool degeneracy_pass = false;
    double drift_value = 0.0;  // b(x) nu (+ curvature term, zero in d = 1)
    bool drift_pass = false;
};

struct InvarianceReport {
    bool applicable = false; // reflecting boxes only; torus is invariant by construction
    bool sign_flipped = false;
    std::vector<InvarianceEndpoint> endpoints;
    bool pass = false;
};

/// Boundary-invariance conditions at the endpoints of the box:
/// a(x) nu^2 = 0 and b(x) nu >= 0 as printed; `flip_drift_sign` switches the
/// drift inequality to b(x) nu <= 0 for the inward-pointing convention.
InvarianceReport check_invariance(const Coefficients& coeffs, const DomainGrid& grid,
                                  bool flip_drift_sign = false);

} // namespace kslab
