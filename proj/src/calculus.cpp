#include "kslab/calculus.hpp"

#include <cmath>
#include <utility>

#include "kslab/quadrature.hpp"

namespace kslab {

SmoothFn smooth_poly(std::vector<double> coeffs) {
    auto horner = [](const std::vector<double>& c, double x) {
        double acc = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
        return acc;
    };
    std::vector<double> d1(coeffs.size() > 1 ? coeffs.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < coeffs.size(); ++i) d1[i - 1] = i * coeffs[i];
    std::vector<double> d2(d1.size() > 1 ? d1.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < d1.size(); ++i) d2[i - 1] = i * d1[i];
    SmoothFn fn;
    fn.f = [coeffs, horner](double x) { return horner(coeffs, x); };
    fn.df = [d1, horner](double x) { return horner(d1, x); };
    fn.d2f = [d2, horner](double x) { return horner(d2, x); };
    return fn;
}

SmoothFn smooth_cos(double freq, double phase, double amp) {
    SmoothFn fn;
    fn.f = [=](double x) { return amp * std::cos(freq * x + phase); };
    fn.df = [=](double x) { return -amp * freq * std::sin(freq * x + phase); };
    fn.d2f = [=](double x) { return -amp * freq * freq * std::cos(freq * x + phase); };
    return fn;
}

SmoothFn smooth_sin(double freq, double phase, double amp) {
    return smooth_cos(freq, phase - M_PI / 2.0, amp);
}

SmoothFn smooth_constant(double c) {
    SmoothFn fn;
    fn.f = [c](double) { return c; };
    fn.df = [](double) { return 0.0; };
    fn.d2f = [](double) { return 0.0; };
    return fn;
}

CylinderFunctional::CylinderFunctional(std::vector<SmoothFn> inner, Outer outer, std::string label)
    : inner_(std::move(inner)), outer_(std::move(outer)), label_(std::move(label)) {
    if (inner_.empty()) throw UsageError("CylinderFunctional: need at least one inner function");
    for (const SmoothFn& fn : inner_)
        if (!fn.f || !fn.df || !fn.d2f)
            throw ConfigError("CylinderFunctional: inner function lacks derivative callables");
    if (!outer_.g || !outer_.grad || !outer_.hess)
        throw ConfigError("CylinderFunctional: outer map lacks gradient or Hessian callables");
}

std::vector<double> CylinderFunctional::moments(const GridMeasure& mu) const {
    std::vector<double> r(inner_.size());
    for (std::size_t i = 0; i < inner_.size(); ++i) r[i] = mu.pair(inner_[i].f);
    return r;
}

double CylinderFunctional::value(const GridMeasure& mu) const { return outer_.g(moments(mu)); }

double CylinderFunctional::g_at(std::span<const double> m) const { return outer_.g(m); }

void CylinderFunctional::gradient_at(std::span<const double> m, std::vector<double>& out) const {
    out.assign(inner_.size(), 0.0);
    outer_.grad(m, out);
}

void CylinderFunctional::hessian_at(std::span<const double> m, std::vector<double>& out) const {
    out.assign(inner_.size() * inner_.size(), 0.0);
    outer_.hess(m, out);
}

double CylinderFunctional::lf(const GridMeasure& mu, double x, bool centered) const {
    const auto r = moments(mu);
    std::vector<double> grad;
    gradient_at(r, grad);
    double v = 0.0;
    for (std::size_t i = 0; i < inner_.size(); ++i) v += grad[i] * inner_[i].f(x);
    if (centered) {
        // <mu, lf(mu,.)> = sum_i dg_i <mu, phi_i> = grad . r
        double shift = 0.0;
        for (std::size_t i = 0; i < inner_.size(); ++i) shift += grad[i] * r[i];
        v -= shift;
    }
    return v;
}

std::vector<double> CylinderFunctional::lf_samples(const GridMeasure& mu, bool centered) const {
    const auto r = moments(mu);
    std::vector<double> grad;
    gradient_at(r, grad);
    double shift = 0.0;
    if (centered)
        for (std::size_t i = 0; i < inner_.size(); ++i) shift += grad[i] * r[i];
    const DomainGrid& g = mu.grid();
    std::vector<double> out(static_cast<std::size_t>(g.size()), -shift);
    for (std::size_t i = 0; i < inner_.size(); ++i) {
        const auto phi = g.sample(inner_[i].f);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += grad[i] * phi[j];
    }
    return out;
}

double CylinderFunctional::lf2(const GridMeasure& mu, double x, double y) const {
    const auto r = moments(mu);
    std::vector<double> hess;
    hessian_at(r, hess);
    const std::size_t n = inner_.size();
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            v += hess[i * n + j] * inner_[i].f(x) * inner_[j].f(y);
    return v;
}

double CylinderFunctional::l1(const GridMeasure& mu, double x) const {
    const auto r = moments(mu);
    std::vector<double> grad;
    gradient_at(r, grad);
    double v = 0.0;
    for (std::size_t i = 0; i < inner_.size(); ++i) v += grad[i] * inner_[i].df(x);
    return v;
}

double CylinderFunctional::l2(const GridMeasure& mu, double x, double y) const {
    const auto r = moments(mu);
    std::vector<double> hess;
    hessian_at(r, hess);
    const std::size_t n = inner_.size();
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            v += hess[i * n + j] * inner_[i].df(x) * inner_[j].df(y);
    return v;
}

void CylinderFunctional::lf_fields(const GridMeasure& mu, std::vector<double>& lf,
                                   std::vector<double>& dlf, std::vector<double>& ddlf) const {
    const auto r = moments(mu);
    std::vector<double> grad;
    gradient_at(r, grad);
    const DomainGrid& g = mu.grid();
    const std::size_t n = static_cast<std::size_t>(g.size());
    lf.assign(n, 0.0);
    dlf.assign(n, 0.0);
    ddlf.assign(n, 0.0);
    for (std::size_t i = 0; i < inner_.size(); ++i) {
        const SmoothFn& phi = inner_[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double x = g.point(static_cast<int>(j));
            lf[j] += grad[i] * phi.f(x);
            dlf[j] += grad[i] * phi.df(x);
            ddlf[j] += grad[i] * phi.d2f(x);
        }
    }
}

std::vector<double> CylinderFunctional::inner_samples(const DomainGrid& grid, int i,
                                                      int deriv) const {
    const SmoothFn& phi = inner_[static_cast<std::size_t>(i)];
    switch (deriv) {
        case 0: return grid.sample(phi.f);
        case 1: return grid.sample(phi.df);
        case 2: return grid.sample(phi.d2f);
        default: throw UsageError("inner_samples: deriv must be 0, 1 or 2");
    }
}

CylinderFunctional cyl_linear(SmoothFn phi, std::string label) {
    CylinderFunctional::Outer outer;
    outer.g = [](std::span<const double> r) { return r[0]; };
    outer.grad = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    outer.hess = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    return CylinderFunctional({std::move(phi)}, std::move(outer), std::move(label));
}

CylinderFunctional cyl_moment_power(SmoothFn phi, int p, std::string label) {
    if (p < 1) throw UsageError("cyl_moment_power: exponent must be >= 1");
    CylinderFunctional::Outer outer;
    outer.g = [p](std::span<const double> r) { return std::pow(r[0], p); };
    outer.grad = [p](std::span<const double> r, std::span<double> out) {
        out[0] = p * std::pow(r[0], p - 1);
    };
    outer.hess = [p](std::span<const double> r, std::span<double> out) {
        out[0] = p < 2 ? 0.0 : p * (p - 1) * std::pow(r[0], p - 2);
    };
    return CylinderFunctional({std::move(phi)}, std::move(outer), std::move(label));
}

CylinderFunctional cyl_constant(double c) {
    CylinderFunctional::Outer outer;
    outer.g = [c](std::span<const double>) { return c; };
    outer.grad = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    outer.hess = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    return CylinderFunctional({smooth_constant(1.0)}, std::move(outer), "constant");
}

DerivativeField lf_field(const CylinderFunctional& f, bool centered) {
    DerivativeField d;
    d.kind = DerivKind::lf;
    d.centered = centered;
    d.eval1 = [&f, centered](const GridMeasure& mu, double x) { return f.lf(mu, x, centered); };
    return d;
}

DerivativeField lf2_field(const CylinderFunctional& f) {
    DerivativeField d;
    d.kind = DerivKind::lf2;
    d.eval2 = [&f](const GridMeasure& mu, double x, double y) { return f.lf2(mu, x, y); };
    return d;
}

double verify_lfd_identity(const CylinderFunctional& f, const GridMeasure& mu,
                           const GridMeasure& nu, int n_quad) {
    if (n_quad < 1) throw UsageError("verify_lfd_identity: n_quad must be >= 1");
    if (!mu.grid().same_discretization(nu.grid()))
        throw UsageError("verify_lfd_identity: measures live on different grids");
    const Quadrature quad = gauss_legendre_01(n_quad);
    double integral = 0.0;
    for (int qi = 0; qi < n_quad; ++qi) {
        const GridMeasure mid = interpolate(mu, nu, quad.nodes[static_cast<std::size_t>(qi)]);
        const auto lf = f.lf_samples(mid, /*centered=*/false);
        double inner = 0.0;
        for (std::size_t i = 0; i < lf.size(); ++i)
            inner += (mu.weights()[i] - nu.weights()[i]) * lf[i];
        integral += quad.weights[static_cast<std::size_t>(qi)] * inner;
    }
    return std::abs(f.value(mu) - f.value(nu) - integral);
}

} // namespace kslab
