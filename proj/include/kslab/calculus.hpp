#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kslab/measures.hpp"

namespace kslab {

/// Scalar field on K with analytic first and second derivatives.
struct SmoothFn {
    std::function<double(double)> f, df, d2f;
};

SmoothFn smooth_poly(std::vector<double> coeffs); // c0 + c1 x + c2 x^2 + ...
SmoothFn smooth_cos(double freq, double phase = 0.0, double amp = 1.0); // amp cos(freq x + phase)
SmoothFn smooth_sin(double freq, double phase = 0.0, double amp = 1.0);
SmoothFn smooth_constant(double c);

/// Cylinder functional F(mu) = g(<mu,phi_1>, ..., <mu,phi_n>) with analytic
/// outer gradient/Hessian and inner spatial derivatives, so every derivative
/// in the closed-form table is available pointwise.
class CylinderFunctional {
public:
    struct Outer {
        std::function<double(std::span<const double>)> g;
        /// gradient of g, written into out (size n)
        std::function<void(std::span<const double>, std::span<double>)> grad;
        /// Hessian of g, row-major into out (size n*n); must be symmetric
        std::function<void(std::span<const double>, std::span<double>)> hess;
    };

    CylinderFunctional(std::vector<SmoothFn> inner, Outer outer, std::string label = "");

    int arity() const { return static_cast<int>(inner_.size()); }
    const std::string& label() const { return label_; }
    const SmoothFn& inner(int i) const { return inner_[static_cast<std::size_t>(i)]; }

    std::vector<double> moments(const GridMeasure& mu) const;
    double value(const GridMeasure& mu) const;

    double g_at(std::span<const double> moments) const;
    void gradient_at(std::span<const double> moments, std::vector<double>& out) const;
    void hessian_at(std::span<const double> moments, std::vector<double>& out) const;

    /// Linear functional derivative at x; centered subtracts <mu, lf(mu,.)>
    /// so the centered version integrates to zero against mu.
    double lf(const GridMeasure& mu, double x, bool centered = true) const;
    std::vector<double> lf_samples(const GridMeasure& mu, bool centered = true) const;

    /// Second linear functional derivative at (x, y).
    double lf2(const GridMeasure& mu, double x, double y) const;

    /// L-derivatives: d_mu F = d_x lf, d2_mu F = d_x d_y lf2.
    double l1(const GridMeasure& mu, double x) const;
    double l2(const GridMeasure& mu, double x, double y) const;

    /// Grid samples of lf and its first two spatial derivatives (uncentered;
    /// centering shifts lf by a constant and leaves both derivatives alone).
    void lf_fields(const GridMeasure& mu, std::vector<double>& lf, std::vector<double>& dlf,
                   std::vector<double>& ddlf) const;

    /// Samples of phi_i and derivatives on a grid; deriv in {0, 1, 2}.
    std::vector<double> inner_samples(const DomainGrid& grid, int i, int deriv) const;

private:
    std::vector<SmoothFn> inner_;
    Outer outer_;
    std::string label_;
};

// --- convenience constructors -------------------------------------------

/// F(mu) = <mu, phi>
CylinderFunctional cyl_linear(SmoothFn phi, std::string label = "");
/// F(mu) = <mu, phi>^p
CylinderFunctional cyl_moment_power(SmoothFn phi, int p, std::string label = "");
/// F(mu) = c
CylinderFunctional cyl_constant(double c);

enum class DerivKind { lf, lf2, l_first, l_second };

/// Thin named wrapper for a derivative field of a functional on measures.
struct DerivativeField {
    DerivKind kind = DerivKind::lf;
    bool centered = false;
    std::function<double(const GridMeasure&, double)> eval1;
    std::function<double(const GridMeasure&, double, double)> eval2;
};

DerivativeField lf_field(const CylinderFunctional& f, bool centered = true);
DerivativeField lf2_field(const CylinderFunctional& f);

/// Residual of the defining identity of the linear functional derivative,
///   F(mu) - F(nu) - int_0^1 <mu - nu, lf(theta mu + (1-theta) nu, .)> dtheta,
/// with the theta integral evaluated by n_quad-node Gauss-Legendre.
double verify_lfd_identity(const CylinderFunctional& f, const GridMeasure& mu,
                           const GridMeasure& nu, int n_quad);

} // namespace kslab
