#include "kslab/model.hpp"

#include <algorithm>
#include <cmath>

namespace kslab {

namespace {

double param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

} // namespace

Coefficients coefficients_preset(const std::string& name,
                                 const std::map<std::string, double>& params) {
    Coefficients c;
    c.name = name;
    if (name == "torus-ou") {
        const double theta = param(params, "theta", 0.6);
        const double center = param(params, "center", 0.5);
        const double sigma = param(params, "sigma", 0.1);
        const double sigma_bar = param(params, "sigma_bar", 0.04);
        const double gain = param(params, "obs_gain", 0.5);
        const double tau = 2.0 * M_PI;
        c.b = [theta, center, tau](double x) { return -theta * std::sin(tau * (x - center)); };
        c.sigma = [sigma](double) { return sigma; };
        c.sigma_bar = [sigma_bar](double) { return sigma_bar; };
        c.h = [gain, tau](double x) { return gain * std::cos(tau * x); };
        c.b_bound = std::abs(theta);
        c.sigma_bound = std::abs(sigma);
        c.sigma_bar_bound = std::abs(sigma_bar);
        c.h_bound = std::abs(gain);
        c.b_lip = std::abs(theta) * tau;
        c.sigma_lip = 0.0;
        c.sigma_bar_lip = 0.0;
        return c;
    }
    if (name == "torus-heat") {
        const double sigma = param(params, "sigma", 0.1);
        c.b = [](double) { return 0.0; };
        c.sigma = [sigma](double) { return sigma; };
        c.sigma_bar = [](double) { return 0.0; };
        c.h = [](double) { return 0.0; };
        c.sigma_bound = std::abs(sigma);
        return c;
    }
    if (name == "pinned-box") {
        const double beta = param(params, "beta", 0.5);
        const double gamma = param(params, "gamma", 0.4);
        const double gain = param(params, "obs_gain", 0.5);
        auto bump = [](double x) { return x * (1.0 - x); };
        c.b = [beta, bump](double x) { return beta * bump(x) * (0.5 - x); };
        c.sigma = [gamma, bump](double x) { return gamma * bump(x); };
        c.sigma_bar = [gamma, bump](double x) { return gamma * bump(x); };
        c.h = [gain](double x) { return gain * x; };
        c.b_bound = std::abs(beta) * 0.25 * 0.5;
        c.sigma_bound = std::abs(gamma) * 0.25;
        c.sigma_bar_bound = std::abs(gamma) * 0.25;
        c.h_bound = std::abs(gain);
        c.b_lip = std::abs(beta); // |d/dx [x(1-x)(1/2-x)]| <= 1 on [0,1]
        c.sigma_lip = std::abs(gamma);
        c.sigma_bar_lip = std::abs(gamma);
        return c;
    }
    throw ConfigError("unknown coefficient preset '" + name + "'");
}

TriStencil::TriStencil(int n, bool wrap)
    : n_(n), wrap_(wrap), sub_(static_cast<std::size_t>(n), 0.0),
      diag_(static_cast<std::size_t>(n), 0.0), sup_(static_cast<std::size_t>(n), 0.0) {
    if (n < 2) throw UsageError("TriStencil: need at least 2 rows");
}

void TriStencil::apply(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = static_cast<std::size_t>(n_);
    if (in.size() != n || out.size() != n)
        throw UsageError("TriStencil::apply: dimension mismatch");
    out[0] = diag_[0] * in[0] + sup_[0] * in[1];
    if (wrap_) out[0] += corner_lo_ * in[n - 1];
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = sub_[i] * in[i - 1] + diag_[i] * in[i] + sup_[i] * in[i + 1];
    out[n - 1] = sub_[n - 1] * in[n - 2] + diag_[n - 1] * in[n - 1];
    if (wrap_) out[n - 1] += corner_hi_ * in[0];
}

std::vector<double> TriStencil::apply(std::span<const double> in) const {
    std::vector<double> out(in.size());
    apply(in, out);
    return out;
}

TriStencil TriStencil::transposed() const {
    TriStencil t(n_, wrap_);
    for (int i = 0; i < n_; ++i) t.diag(i) = diag(i);
    for (int i = 0; i + 1 < n_; ++i) {
        t.sub(i + 1) = sup(i); // (i, i+1) -> (i+1, i)
        t.sup(i) = sub(i + 1); // (i+1, i) -> (i, i+1)
    }
    t.corner_lo() = corner_hi_; // (n-1, 0) -> (0, n-1)
    t.corner_hi() = corner_lo_;
    return t;
}

OperatorSet build_operators(const Coefficients& coeffs, std::shared_ptr<const DomainGrid> grid) {
    const int n = grid->size();
    const double dx = grid->dx();
    const bool torus = grid->boundary() == BoundaryMode::torus;

    OperatorSet ops{grid,
                    CoefficientSamples{grid->sample(coeffs.b), grid->sample(coeffs.sigma),
                                       grid->sample(coeffs.sigma_bar), grid->sample(coeffs.h),
                                       {}},
                    TriStencil(n, torus), TriStencil(n, torus), TriStencil(n, torus),
                    TriStencil(n, torus)};
    auto& f = ops.fields;
    f.a.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        f.a[k] = f.sigma[k] * f.sigma[k] + f.sigma_bar[k] * f.sigma_bar[k];
    }

    TriStencil& A = ops.a_op;
    TriStencil& B = ops.b_op;
    const double inv2dx = 1.0 / (2.0 * dx);
    const double invdx2 = 1.0 / (dx * dx);
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double drift = f.b[k] * inv2dx;
        const double diff = 0.5 * f.a[k] * invdx2;
        const double conv = f.sigma_bar[k] * inv2dx;
        const bool interior = torus || (i > 0 && i + 1 < n);
        if (interior) {
            A.sub(i) = -drift + diff;
            A.diag(i) = -2.0 * diff;
            A.sup(i) = drift + diff;
            B.sub(i) = -conv;
            B.sup(i) = conv;
        } else if (i == 0) {
            // one-sided drift, reflected ghost (phi[-1] = phi[1]) for diffusion
            A.diag(i) = -f.b[k] / dx - 2.0 * diff;
            A.sup(i) = f.b[k] / dx + 2.0 * diff;
            B.diag(i) = -f.sigma_bar[k] / dx;
            B.sup(i) = f.sigma_bar[k] / dx;
        } else {
            A.sub(i) = -f.b[k] / dx + 2.0 * diff;
            A.diag(i) = f.b[k] / dx - 2.0 * diff;
            B.sub(i) = -f.sigma_bar[k] / dx;
            B.diag(i) = f.sigma_bar[k] / dx;
        }
    }
    if (torus) {
        A.corner_lo() = -f.b[0] * inv2dx + 0.5 * f.a[0] * invdx2;
        A.corner_hi() = f.b[static_cast<std::size_t>(n - 1)] * inv2dx +
                        0.5 * f.a[static_cast<std::size_t>(n - 1)] * invdx2;
        // row 0 loses its sub entry to the corner, row n-1 its sup entry
        A.sub(0) = 0.0;
        A.sup(n - 1) = 0.0;
        B.corner_lo() = -f.sigma_bar[0] * inv2dx;
        B.corner_hi() = f.sigma_bar[static_cast<std::size_t>(n - 1)] * inv2dx;
        B.sub(0) = 0.0;
        B.sup(n - 1) = 0.0;
    }
    ops.a_adj = A.transposed();
    ops.b_adj = B.transposed();
    return ops;
}

std::vector<double> apply_a(const OperatorSet& ops, std::span<const double> phi) {
    return ops.a_op.apply(phi);
}

std::vector<double> apply_b(const OperatorSet& ops, std::span<const double> phi) {
    return ops.b_op.apply(phi);
}

std::vector<double> apply_a_exact(const OperatorSet& ops, std::span<const double> dphi,
                                  std::span<const double> ddphi) {
    const std::size_t n = ops.fields.b.size();
    if (dphi.size() != n || ddphi.size() != n)
        throw UsageError("apply_a_exact: dimension mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = ops.fields.b[i] * dphi[i] + 0.5 * ops.fields.a[i] * ddphi[i];
    return out;
}

std::vector<double> apply_b_exact(const OperatorSet& ops, std::span<const double> dphi) {
    const std::size_t n = ops.fields.sigma_bar.size();
    if (dphi.size() != n) throw UsageError("apply_b_exact: dimension mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = ops.fields.sigma_bar[i] * dphi[i];
    return out;
}

std::vector<double> rk4_evolve(const TriStencil& L, std::vector<double> v, double time,
                               int steps) {
    if (steps < 1) throw UsageError("rk4_evolve: need at least one step");
    const double h = time / steps;
    const std::size_t n = v.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (int s = 0; s < steps; ++s) {
        L.apply(v, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * h * k1[i];
        L.apply(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * h * k2[i];
        L.apply(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + h * k3[i];
        L.apply(tmp, k4);
        for (std::size_t i = 0; i < n; ++i)
            v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return v;
}

namespace {

HypothesisEntry bound_entry(const std::string& name, const std::vector<double>& samples,
                            double declared) {
    double sup = 0.0;
    for (double v : samples) sup = std::max(sup, std::abs(v));
    return {name, sup, declared, sup <= declared + 1e-12};
}

HypothesisEntry lipschitz_entry(const std::string& name, const std::vector<double>& samples,
                                const DomainGrid& grid, double declared) {
    double quot = 0.0;
    for (int i = 0; i < grid.size(); ++i)
        for (int j = i + 1; j < grid.size(); ++j) {
            const double dxij = grid.point(j) - grid.point(i);
            quot = std::max(quot, std::abs(samples[static_cast<std::size_t>(j)] -
                                           samples[static_cast<std::size_t>(i)]) /
                                      dxij);
        }
    return {name, quot, declared, quot <= declared + 1e-12};
}

} // namespace

HypothesisReport check_hypotheses(const Coefficients& coeffs, const DomainGrid& grid) {
    HypothesisReport rep;
    const auto b = grid.sample(coeffs.b);
    const auto sigma = grid.sample(coeffs.sigma);
    const auto sigma_bar = grid.sample(coeffs.sigma_bar);
    const auto h = grid.sample(coeffs.h);

    rep.bounds.push_back(bound_entry("b", b, coeffs.b_bound));
    rep.bounds.push_back(bound_entry("sigma", sigma, coeffs.sigma_bound));
    rep.bounds.push_back(bound_entry("sigma_bar", sigma_bar, coeffs.sigma_bar_bound));
    rep.bounds.push_back(bound_entry("h", h, coeffs.h_bound));

    rep.lipschitz.push_back(lipschitz_entry("b", b, grid, coeffs.b_lip));
    rep.lipschitz.push_back(lipschitz_entry("sigma", sigma, grid, coeffs.sigma_lip));
    rep.lipschitz.push_back(lipschitz_entry("sigma_bar", sigma_bar, grid, coeffs.sigma_bar_lip));

    rep.min_sigma_sq = sigma[0] * sigma[0];
    for (double s : sigma) rep.min_sigma_sq = std::min(rep.min_sigma_sq, s * s);
    rep.ellipticity_pass = rep.min_sigma_sq > 0.0;

    rep.pass = rep.ellipticity_pass;
    for (const auto& e : rep.bounds) rep.pass = rep.pass && e.pass;
    for (const auto& e : rep.lipschitz) rep.pass = rep.pass && e.pass;
    return rep;
}

InvarianceReport check_invariance(const Coefficients& coeffs, const DomainGrid& grid,
                                  bool flip_drift_sign) {
    InvarianceReport rep;
    rep.sign_flipped = flip_drift_sign;
    if (grid.boundary() == BoundaryMode::torus) {
        rep.applicable = false;
        rep.pass = true; // invariant by construction, nothing to check
        return rep;
    }
    rep.applicable = true;
    const double tol = 1e-12;
    rep.pass = true;
    for (double nu : {-1.0, 1.0}) {
        InvarianceEndpoint ep;
        ep.normal = nu;
        ep.x = nu < 0.0 ? grid.lower() : grid.upper();
        const double s = coeffs.sigma(ep.x);
        const double sb = coeffs.sigma_bar(ep.x);
        ep.a_value = (s * s + sb * sb) * nu * nu;
        ep.degeneracy_pass = std::abs(ep.a_value) <= tol;
        // d = 1: the boundary-distance curvature term vanishes
        ep.drift_value = coeffs.b(ep.x) * nu;
        const double v = flip_drift_sign ? -ep.drift_value : ep.drift_value;
        ep.drift_pass = v >= -tol;
        rep.pass = rep.pass && ep.degeneracy_pass && ep.drift_pass;
        rep.endpoints.push_back(ep);
    }
    return rep;
}

} // namespace kslab
