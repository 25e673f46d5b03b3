#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kslab/calculus.hpp"
#include "kslab/measures.hpp"

using namespace kslab;

namespace {

std::shared_ptr<const DomainGrid> unit_grid(int n) {
    return DomainGrid::make(0.0, 1.0, n, BoundaryMode::reflecting);
}

CylinderFunctional cyl_exp_moment(SmoothFn phi, double scale) {
    CylinderFunctional::Outer outer;
    outer.g = [scale](std::span<const double> r) { return std::exp(scale * r[0]); };
    outer.grad = [scale](std::span<const double> r, std::span<double> out) {
        out[0] = scale * std::exp(scale * r[0]);
    };
    outer.hess = [scale](std::span<const double> r, std::span<double> out) {
        out[0] = scale * scale * std::exp(scale * r[0]);
    };
    return CylinderFunctional({std::move(phi)}, std::move(outer), "exp-moment");
}

CylinderFunctional cyl_two_moment() {
    // g(r1, r2) = r1 r2 + sin(r1)
    CylinderFunctional::Outer outer;
    outer.g = [](std::span<const double> r) { return r[0] * r[1] + std::sin(r[0]); };
    outer.grad = [](std::span<const double> r, std::span<double> out) {
        out[0] = r[1] + std::cos(r[0]);
        out[1] = r[0];
    };
    outer.hess = [](std::span<const double> r, std::span<double> out) {
        out[0] = -std::sin(r[0]);
        out[1] = 1.0;
        out[2] = 1.0;
        out[3] = 0.0;
    };
    return CylinderFunctional({smooth_poly({0.0, 1.0}), smooth_cos(2.0)}, std::move(outer),
                              "two-moment");
}

} // namespace

TEST_CASE("lf closed forms: linear, constant, squared moment") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 3, 1.0);
    auto phi = smooth_sin(M_PI);

    auto lin = cyl_linear(phi);
    const double x = g->point(40);
    CHECK(lin.lf(mu, x, false) == doctest::Approx(phi.f(x)).epsilon(1e-14));
    CHECK(lin.lf(mu, x, true) ==
          doctest::Approx(phi.f(x) - mu.pair(phi.f)).epsilon(1e-13));

    auto c = cyl_constant(4.2);
    CHECK(c.lf(mu, x, false) == 0.0);
    CHECK(c.value(mu) == 4.2);

    auto sq = cyl_moment_power(phi, 2);
    const double m1 = mu.pair(phi.f);
    CHECK(sq.lf(mu, x, false) == doctest::Approx(2.0 * m1 * phi.f(x)).epsilon(1e-13));
}

TEST_CASE("centered lf integrates to zero against mu") {
    auto g = unit_grid(48);
    auto mu = sample_random_measure(g, 9, 0.5);
    for (auto& f : {cyl_moment_power(smooth_cos(3.0), 3), cyl_exp_moment(smooth_poly({0.0, 1.0}), 1.5),
                    cyl_two_moment()}) {
        const auto lf = f.lf_samples(mu, true);
        CHECK(std::abs(mu.pair(lf)) <= 1e-10);
    }
}

TEST_CASE("lf2 closed forms and symmetry") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 5, 1.0);
    auto phi = smooth_cos(2.0 * M_PI);

    auto lin = cyl_linear(phi);
    CHECK(lin.lf2(mu, 0.3, 0.8) == 0.0);

    auto sq = cyl_moment_power(phi, 2);
    CHECK(sq.lf2(mu, 0.3, 0.8) ==
          doctest::Approx(2.0 * phi.f(0.3) * phi.f(0.8)).epsilon(1e-14));

    auto f = cyl_two_moment();
    for (int i = 0; i < 20; ++i) {
        const double x = g->point(3 * i), y = g->point(63 - 2 * i);
        CHECK(f.lf2(mu, x, y) == doctest::Approx(f.lf2(mu, y, x)).epsilon(1e-14));
    }
}

TEST_CASE("L-derivatives: differentiate the inner functions") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 8, 1.0);

    auto xsq = cyl_linear(smooth_poly({0.0, 0.0, 1.0}));
    CHECK(xsq.l1(mu, 0.37) == doctest::Approx(2.0 * 0.37).epsilon(1e-14));

    auto c = cyl_constant(1.0);
    CHECK(c.l1(mu, 0.2) == 0.0);
    CHECK(c.l2(mu, 0.2, 0.9) == 0.0);

    // symbolic oracle: F = <mu, sin(pi x)>^2 has
    // d2_mu F(x, y) = 2 pi^2 cos(pi x) cos(pi y)
    auto sq = cyl_moment_power(smooth_sin(M_PI), 2);
    for (double x : {0.1, 0.4, 0.75})
        for (double y : {0.2, 0.55, 0.9})
            CHECK(sq.l2(mu, x, y) ==
                  doctest::Approx(2.0 * M_PI * M_PI * std::cos(M_PI * x) * std::cos(M_PI * y))
                      .epsilon(1e-13));
}

TEST_CASE("l1 matches centered finite differences of lf in x") {
    auto mu_c = sample_random_measure(unit_grid(64), 4, 1.0);
    auto f = cyl_moment_power(smooth_sin(2.0), 2);
    double prev_err = -1.0;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
        double max_err = 0.0;
        for (double x : {0.2, 0.5, 0.8}) {
            const double fd = (f.lf(mu_c, x + h, false) - f.lf(mu_c, x - h, false)) / (2.0 * h);
            max_err = std::max(max_err, std::abs(fd - f.l1(mu_c, x)));
        }
        if (prev_err > 0.0) CHECK(max_err < 0.3 * prev_err); // ~ O(h^2) contraction
        prev_err = max_err;
    }
}

TEST_CASE("lfd identity: quadrature exactness and convergence") {
    auto g = unit_grid(96);
    auto mu = sample_random_measure(g, 31, 1.0);
    auto nu = sample_random_measure(g, 32, 1.0);

    auto lin = cyl_linear(smooth_cos(5.0));
    for (int nq : {1, 2, 8})
        CHECK(verify_lfd_identity(lin, mu, nu, nq) <= 1e-14);

    // quadratic outer map: integrand is degree 1 in theta, 2-node rule exact
    auto sq = cyl_moment_power(smooth_cos(2.0), 2);
    for (int nq : {2, 3, 16})
        CHECK(verify_lfd_identity(sq, mu, nu, nq) <= 1e-14);

    // analytic outer map: residual decays with node doubling to < 1e-10 at 32
    auto ex = cyl_exp_moment(smooth_poly({0.0, 1.0}), 1.0);
    const double r4 = verify_lfd_identity(ex, mu, nu, 4);
    const double r8 = verify_lfd_identity(ex, mu, nu, 8);
    const double r32 = verify_lfd_identity(ex, mu, nu, 32);
    CHECK(r8 <= r4);
    CHECK(r32 < 1e-10);

    CHECK_THROWS_AS(verify_lfd_identity(ex, mu, nu, 0), UsageError);
}

TEST_CASE("finite-difference consistency of the lf derivative") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 41, 1.0);
    auto nu = sample_random_measure(g, 42, 1.0);
    auto f = cyl_exp_moment(smooth_sin(3.0), 1.2);

    const auto lf_mu = f.lf_samples(mu, false);
    double directional = 0.0;
    for (std::size_t i = 0; i < lf_mu.size(); ++i)
        directional += (nu.weights()[i] - mu.weights()[i]) * lf_mu[i];

    double prev_err = -1.0;
    for (double eps : {2e-2, 1e-2, 5e-3, 2.5e-3}) {
        const GridMeasure bumped = interpolate(nu, mu, eps); // (1-eps) mu + eps nu
        const double fd = (f.value(bumped) - f.value(mu)) / eps;
        const double err = std::abs(fd - directional);
        if (prev_err > 0.0) CHECK(err < 0.7 * prev_err); // first-order rate
        prev_err = err;
    }
}

TEST_CASE("recentering leaves pairings against zero-mass signed measures unchanged") {
    auto g = unit_grid(48);
    auto mu = sample_random_measure(g, 51, 1.0);
    auto nu = sample_random_measure(g, 52, 1.0);
    auto f = cyl_two_moment();
    for (double theta : {0.0, 0.3, 0.7, 1.0}) {
        auto mid = interpolate(mu, nu, theta);
        const auto raw = f.lf_samples(mid, false);
        const auto centered = f.lf_samples(mid, true);
        double p_raw = 0.0, p_centered = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double d = mu.weights()[i] - nu.weights()[i];
            p_raw += d * raw[i];
            p_centered += d * centered[i];
        }
        CHECK(p_raw == doctest::Approx(p_centered).epsilon(1e-12));
    }
}

TEST_CASE("derivative field wrappers carry kind and normalization") {
    auto g = unit_grid(32);
    auto mu = sample_random_measure(g, 61, 1.0);
    auto f = cyl_moment_power(smooth_cos(1.0), 2);
    auto lf = lf_field(f, true);
    CHECK(lf.kind == DerivKind::lf);
    CHECK(lf.centered);
    CHECK(lf.eval1(mu, 0.5) == doctest::Approx(f.lf(mu, 0.5, true)));
    auto lf2 = lf2_field(f);
    CHECK(lf2.kind == DerivKind::lf2);
    CHECK(lf2.eval2(mu, 0.25, 0.75) == doctest::Approx(f.lf2(mu, 0.25, 0.75)));
}

TEST_CASE("missing derivative callables are a configuration error") {
    SmoothFn broken;
    broken.f = [](double x) { return x; };
    CylinderFunctional::Outer outer;
    outer.g = [](std::span<const double> r) { return r[0]; };
    outer.grad = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    outer.hess = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    CHECK_THROWS_AS(CylinderFunctional({broken}, outer), ConfigError);
}
