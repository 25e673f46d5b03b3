#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kslab/measures.hpp"
#include "kslab/model.hpp"

using namespace kslab;

namespace {

Coefficients constant_coeffs(double b, double sigma, double sigma_bar, double h) {
    Coefficients c;
    c.name = "inline";
    c.b = [b](double) { return b; };
    c.sigma = [sigma](double) { return sigma; };
    c.sigma_bar = [sigma_bar](double) { return sigma_bar; };
    c.h = [h](double) { return h; };
    c.b_bound = std::abs(b);
    c.sigma_bound = std::abs(sigma);
    c.sigma_bar_bound = std::abs(sigma_bar);
    c.h_bound = std::abs(h);
    return c;
}

} // namespace

TEST_CASE("apply_A annihilates constants in both boundary modes") {
    auto coeffs = coefficients_preset("torus-ou");
    for (auto mode : {BoundaryMode::torus, BoundaryMode::reflecting}) {
        auto grid = DomainGrid::make(0.0, 1.0, 64, mode);
        auto ops = build_operators(coeffs, grid);
        std::vector<double> ones(64, 1.0);
        for (double v : apply_a(ops, ones)) CHECK(std::abs(v) <= 1e-12);
        for (double v : apply_b(ops, ones)) CHECK(std::abs(v) <= 1e-12);
    }
}

TEST_CASE("apply_A: pure diffusion on x^2 gives 2 on interior points") {
    auto grid = DomainGrid::make(0.0, 1.0, 33, BoundaryMode::reflecting);
    auto ops = build_operators(constant_coeffs(0.0, std::sqrt(2.0), 0.0, 0.0), grid);
    auto phi = grid->sample([](double x) { return x * x; });
    auto out = apply_a(ops, phi);
    for (int i = 1; i + 1 < grid->size(); ++i)
        CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("apply_A converges at second order to the symbolic action") {
    Coefficients c;
    c.name = "smooth";
    c.b = [](double x) { return 0.2 + 0.1 * std::cos(2.0 * M_PI * x); };
    c.sigma = [](double) { return 0.3; };
    c.sigma_bar = [](double) { return 0.1; };
    c.h = [](double) { return 0.0; };

    auto phi_f = [](double x) { return std::sin(2.0 * M_PI * x) + 0.5 * std::cos(4.0 * M_PI * x); };
    auto phi_d = [](double x) {
        return 2.0 * M_PI * std::cos(2.0 * M_PI * x) - 2.0 * M_PI * std::sin(4.0 * M_PI * x);
    };
    auto phi_dd = [](double x) {
        return -4.0 * M_PI * M_PI * std::sin(2.0 * M_PI * x) -
               8.0 * M_PI * M_PI * std::cos(4.0 * M_PI * x);
    };

    auto sup_error = [&](int n) {
        auto grid = DomainGrid::make(0.0, 1.0, n, BoundaryMode::torus);
        auto ops = build_operators(c, grid);
        auto numeric = apply_a(ops, grid->sample(phi_f));
        double err = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = grid->point(i);
            const double exact = c.b(x) * phi_d(x) + 0.5 * (0.3 * 0.3 + 0.1 * 0.1) * phi_dd(x);
            err = std::max(err, std::abs(numeric[static_cast<std::size_t>(i)] - exact));
        }
        return err;
    };
    const double e64 = sup_error(64), e128 = sup_error(128), e256 = sup_error(256);
    CHECK(e64 / e128 == doctest::Approx(4.0).epsilon(0.2));
    CHECK(e128 / e256 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("apply_B: zero field, constants, and the torus sine example") {
    auto grid = DomainGrid::make(0.0, 1.0, 128, BoundaryMode::torus);

    auto no_conv = build_operators(constant_coeffs(0.3, 0.5, 0.0, 0.0), grid);
    auto phi = grid->sample([](double x) { return std::sin(2.0 * M_PI * x); });
    for (double v : apply_b(no_conv, phi)) CHECK(v == 0.0);

    auto ops = build_operators(constant_coeffs(0.0, 0.5, 1.0, 0.0), grid);
    auto out = apply_b(ops, phi);
    for (int i = 0; i < grid->size(); ++i) {
        const double exact = 2.0 * M_PI * std::cos(2.0 * M_PI * grid->point(i));
        CHECK(std::abs(out[static_cast<std::size_t>(i)] - exact) <= 0.01); // O(dx^2) at N=128
    }
}

TEST_CASE("exact operator actions use the supplied derivatives") {
    auto grid = DomainGrid::make(0.0, 1.0, 32, BoundaryMode::torus);
    auto ops = build_operators(coefficients_preset("torus-ou"), grid);
    auto dphi = grid->sample([](double x) { return 2.0 * M_PI * std::cos(2.0 * M_PI * x); });
    auto ddphi = grid->sample([](double x) { return -4.0 * M_PI * M_PI * std::sin(2.0 * M_PI * x); });
    auto a_out = apply_a_exact(ops, dphi, ddphi);
    auto b_out = apply_b_exact(ops, dphi);
    for (int i = 0; i < grid->size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        CHECK(a_out[k] ==
              doctest::Approx(ops.fields.b[k] * dphi[k] + 0.5 * ops.fields.a[k] * ddphi[k]));
        CHECK(b_out[k] == doctest::Approx(ops.fields.sigma_bar[k] * dphi[k]));
    }
}

TEST_CASE("discrete adjoints are exact transposes") {
    for (auto mode : {BoundaryMode::torus, BoundaryMode::reflecting}) {
        auto grid = DomainGrid::make(0.0, 1.0, 48, mode);
        auto ops = build_operators(coefficients_preset("torus-ou"), grid);
        auto p = sample_random_measure(grid, 7, 1.0).weights();
        auto phi = grid->sample([](double x) { return std::sin(3.0 * x) + x; });

        for (const auto* pair : {&ops.a_op, &ops.b_op}) {
            const TriStencil& fwd = *pair;
            const TriStencil adj = fwd.transposed();
            const auto fwd_phi = fwd.apply(phi);
            const auto adj_p = adj.apply(p);
            double lhs = 0.0, rhs = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                lhs += adj_p[i] * phi[i];
                rhs += p[i] * fwd_phi[i];
            }
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
        }
    }
}

TEST_CASE("hypothesis checks: ellipticity") {
    auto grid = DomainGrid::make(0.0, 1.0, 64, BoundaryMode::reflecting);

    auto ok = check_hypotheses(constant_coeffs(0.0, 1.0, 0.0, 0.0), *grid);
    CHECK(ok.ellipticity_pass);
    CHECK(ok.min_sigma_sq == doctest::Approx(1.0));

    Coefficients degenerate = constant_coeffs(0.0, 1.0, 0.0, 0.0);
    degenerate.sigma = [](double x) { return x; };
    degenerate.sigma_bound = 1.0;
    degenerate.sigma_lip = 1.0;
    auto bad = check_hypotheses(degenerate, *grid);
    CHECK_FALSE(bad.ellipticity_pass);
    CHECK(bad.min_sigma_sq == 0.0);
    CHECK_FALSE(bad.pass);
}

TEST_CASE("hypothesis checks: empirical Lipschitz quotient vs declared constant") {
    auto grid = DomainGrid::make(0.0, 1.0, 128, BoundaryMode::reflecting);
    Coefficients c = constant_coeffs(0.0, 1.0, 0.0, 0.0);
    c.b = [](double x) { return std::sin(5.0 * x); };
    c.b_bound = 1.0;

    c.b_lip = 5.0;
    CHECK(check_hypotheses(c, *grid).lipschitz[0].pass);

    c.b_lip = 4.0;
    auto rep = check_hypotheses(c, *grid);
    CHECK_FALSE(rep.lipschitz[0].pass);
    CHECK(rep.lipschitz[0].observed > 4.0);
    CHECK_FALSE(rep.pass);
}

TEST_CASE("declared bounds are checked against grid sups") {
    auto grid = DomainGrid::make(0.0, 1.0, 64, BoundaryMode::torus);
    Coefficients c = coefficients_preset("torus-ou");
    auto rep = check_hypotheses(c, *grid);
    for (const auto& e : rep.bounds) CHECK(e.pass);

    c.b_bound = 0.1; // understates the actual drift amplitude
    auto bad = check_hypotheses(c, *grid);
    CHECK_FALSE(bad.bounds[0].pass);
}

TEST_CASE("invariance checker: torus is vacuous, pinned box passes, flat sigma fails") {
    auto torus = DomainGrid::make(0.0, 1.0, 32, BoundaryMode::torus);
    auto box = DomainGrid::make(0.0, 1.0, 32, BoundaryMode::reflecting);

    auto vac = check_invariance(coefficients_preset("torus-ou"), *torus);
    CHECK_FALSE(vac.applicable);
    CHECK(vac.pass);

    auto pinned = check_invariance(coefficients_preset("pinned-box"), *box);
    CHECK(pinned.applicable);
    for (const auto& ep : pinned.endpoints) {
        CHECK(ep.degeneracy_pass);
        CHECK(ep.drift_pass); // b vanishes at both endpoints
    }
    CHECK(pinned.pass);

    auto flat = check_invariance(constant_coeffs(0.0, 1.0, 0.0, 0.0), *box);
    CHECK(flat.applicable);
    for (const auto& ep : flat.endpoints) {
        CHECK_FALSE(ep.degeneracy_pass);
        CHECK(ep.a_value == doctest::Approx(1.0));
    }
    CHECK_FALSE(flat.pass);
}

TEST_CASE("invariance drift sign switch") {
    auto box = DomainGrid::make(0.0, 1.0, 32, BoundaryMode::reflecting);
    Coefficients c = constant_coeffs(0.0, 0.0, 0.0, 0.0);
    c.sigma = [](double x) { return x * (1.0 - x); };
    c.b = [](double x) { return 0.25 - 0.5 * x; }; // inward drift at both ends
    c.b_bound = 0.25;
    auto printed = check_invariance(c, *box, false);
    // printed condition asks b nu >= 0; inward drift has b nu < 0 at both ends
    CHECK_FALSE(printed.pass);
    auto flipped = check_invariance(c, *box, true);
    CHECK(flipped.pass);
}

TEST_CASE("unknown preset raises a config error") {
    CHECK_THROWS_AS(coefficients_preset("no-such-preset"), ConfigError);
}
