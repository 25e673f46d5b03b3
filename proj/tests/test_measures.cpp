#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "kslab/measures.hpp"
#include "kslab/rng.hpp"

using namespace kslab;

namespace {

std::shared_ptr<const DomainGrid> unit_grid(int n, BoundaryMode mode = BoundaryMode::reflecting) {
    return DomainGrid::make(0.0, 1.0, n, mode);
}

// independent summation route: reverse order, long double accumulator
double brute_force_pair(const GridMeasure& mu, const std::function<double(double)>& phi) {
    long double acc = 0.0L;
    for (int i = mu.size() - 1; i >= 0; --i)
        acc += static_cast<long double>(mu.weights()[static_cast<std::size_t>(i)]) *
               static_cast<long double>(phi(mu.grid().point(i)));
    return static_cast<double>(acc);
}

} // namespace

TEST_CASE("grid construction and invariants") {
    auto g = unit_grid(33);
    CHECK(g->size() == 33);
    CHECK(g->dx() == doctest::Approx(1.0 / 32).epsilon(1e-15));
    CHECK(g->point(0) == 0.0);
    CHECK(g->point(32) == doctest::Approx(1.0));
    for (int i = 1; i < g->size(); ++i) CHECK(g->point(i) > g->point(i - 1));

    auto t = unit_grid(32, BoundaryMode::torus);
    CHECK(t->dx() == doctest::Approx(1.0 / 32));
    CHECK(t->point(31) == doctest::Approx(1.0 - 1.0 / 32));

    CHECK_THROWS_AS(DomainGrid(0.0, 1.0, 1, BoundaryMode::torus), UsageError);
    CHECK_THROWS_AS(DomainGrid(1.0, 0.0, 8, BoundaryMode::torus), UsageError);
}

TEST_CASE("pair: point mass integral and normalization") {
    auto g = unit_grid(65);
    auto phi = [](double x) { return x * x - 0.25 * x; };

    auto delta = GridMeasure::dirac(g, g->point(17));
    CHECK(delta.pair(phi) == doctest::Approx(phi(g->point(17))).epsilon(1e-15));

    auto mu = sample_random_measure(g, 7, 1.5);
    CHECK(mu.pair([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("pair: Dirichlet measure against brute-force sum oracle") {
    auto g = unit_grid(128);
    auto phi = [](double x) { return x * x; };
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 99ull}) {
        auto mu = sample_random_measure(g, seed, 0.8);
        CHECK(mu.pair(phi) == doctest::Approx(brute_force_pair(mu, phi)).epsilon(1e-13));
    }
}

TEST_CASE("pair is linear in the test function") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 11, 2.0);
    auto phi = g->sample([](double x) { return std::sin(3.0 * x); });
    auto psi = g->sample([](double x) { return std::exp(-x); });
    const double a = 1.7, b = -0.4;
    std::vector<double> combo(phi.size());
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * phi[i] + b * psi[i];
    CHECK(mu.pair(combo) ==
          doctest::Approx(a * mu.pair(phi) + b * mu.pair(psi)).epsilon(1e-13));
}

TEST_CASE("pair rejects mismatched sample vectors") {
    auto g = unit_grid(16);
    auto mu = GridMeasure::uniform(g);
    std::vector<double> wrong(15, 1.0);
    CHECK_THROWS_AS(mu.pair(wrong), UsageError);
}

TEST_CASE("metric family: constant member and closed-form derivative bounds") {
    auto g = unit_grid(64);

    auto trivial = MetricFamily::cosine(g, 1);
    CHECK(trivial.size() == 1);
    CHECK(trivial.eval(0, 0.37) == 1.0);
    CHECK(trivial.a(0) == 0.0);
    CHECK(trivial.q(0) == 1.0);

    CHECK_THROWS_AS(MetricFamily::cosine(g, 0), UsageError);

    auto fam = MetricFamily::cosine(g, 8);
    // symbolic differentiation oracle: f_k' = -(k pi / L) sin(k pi (x - l)/L),
    // whose max modulus over K is k pi / L
    for (int k = 1; k < fam.size(); ++k) {
        CHECK(fam.a(k) == doctest::Approx(k * M_PI / 1.0).epsilon(1e-14));
        double max_deriv = 0.0, max_val = 0.0;
        for (int j = 0; j <= 4000; ++j) {
            const double x = j / 4000.0;
            max_deriv = std::max(max_deriv, std::abs(-k * M_PI * std::sin(k * M_PI * x)));
            max_val = std::max(max_val, std::abs(fam.eval(k, x)));
        }
        CHECK(max_deriv <= fam.a(k) + 1e-12);
        CHECK(max_val <= 1.0 + 1e-12);
        CHECK(fam.q(k) == doctest::Approx(std::max({fam.a(k), fam.a(k) * fam.a(k), 1.0})));
        CHECK(fam.q(k) >= 1.0);
    }
}

TEST_CASE("d2: identity, symmetry, explicit finite-series oracle") {
    auto g = unit_grid(64);
    auto fam = MetricFamily::cosine(g, 3);

    auto mu = sample_random_measure(g, 5, 1.0);
    CHECK(fam.d2(mu, mu) == 0.0);

    for (std::uint64_t s = 0; s < 100; ++s) {
        auto a = sample_random_measure(g, 1000 + s, 1.0);
        auto b = sample_random_measure(g, 2000 + s, 1.0);
        CHECK(fam.d2(a, b) == doctest::Approx(fam.d2(b, a)).epsilon(1e-15));
    }

    // term-by-term hand summation for two Diracs and the 3-function family
    const double x1 = g->point(10), x2 = g->point(50);
    auto d1 = GridMeasure::dirac(g, x1);
    auto d2m = GridMeasure::dirac(g, x2);
    auto sq = [](double v) { return v * v; };
    const double a1 = M_PI, a2 = 2.0 * M_PI;
    double hand = 0.0;
    hand += (1.0 / 2.0) * sq(1.0 - 1.0);
    hand += (1.0 / 4.0) / (a1 * a1) * sq(std::cos(M_PI * x1) - std::cos(M_PI * x2));
    hand += (1.0 / 8.0) / (a2 * a2) * sq(std::cos(2.0 * M_PI * x1) - std::cos(2.0 * M_PI * x2));
    CHECK(fam.d2(d1, d2m) == doctest::Approx(std::sqrt(hand)).epsilon(1e-14));
}

TEST_CASE("d2 metric axioms on random triples") {
    auto g = unit_grid(48);
    auto fam = MetricFamily::cosine(g, 8);
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto a = sample_random_measure(g, 3 * s, 0.7);
        auto b = sample_random_measure(g, 3 * s + 1, 0.7);
        auto c = sample_random_measure(g, 3 * s + 2, 0.7);
        const double dab = fam.d2(a, b), dba = fam.d2(b, a);
        const double dac = fam.d2(a, c), dcb = fam.d2(c, b);
        CHECK(dab >= 0.0);
        CHECK(dab == doctest::Approx(dba).epsilon(1e-15));
        CHECK(dab <= dac + dcb + 1e-12);
    }
}

TEST_CASE("d2 truncation is monotone in the family size") {
    auto g = unit_grid(64);
    auto mu = sample_random_measure(g, 101, 0.8);
    auto nu = sample_random_measure(g, 102, 0.8);
    double prev = -1.0;
    for (int m : {2, 4, 8, 16, 32}) {
        const double d = MetricFamily::cosine(g, m).d2sq(mu, nu);
        CHECK(d >= prev); // added terms are nonnegative
        prev = d;
    }
}

TEST_CASE("weak-convergence proxy: Dirac sequence marches to the target") {
    auto g = unit_grid(129);
    auto fam = MetricFamily::cosine(g, 16);
    const int target = 64;
    auto limit = GridMeasure::dirac(g, g->point(target));
    double prev = -1.0;
    for (int offset : {32, 16, 8, 4, 2, 1}) {
        auto point = GridMeasure::dirac(g, g->point(target + offset));
        const double d = fam.d2(point, limit);
        if (prev >= 0.0) CHECK(d < prev);
        prev = d;
        CHECK(d > 0.0);
    }
}

TEST_CASE("interpolate: endpoints, convex combination, invariants") {
    auto g = unit_grid(32);
    auto mu = sample_random_measure(g, 21, 1.0);
    auto nu = sample_random_measure(g, 22, 1.0);

    auto one = interpolate(mu, nu, 1.0);
    auto zero = interpolate(mu, nu, 0.0);
    for (std::size_t i = 0; i < mu.weights().size(); ++i) {
        CHECK(one.weights()[i] == mu.weights()[i]);
        CHECK(zero.weights()[i] == nu.weights()[i]);
    }

    auto da = GridMeasure::dirac(g, g->point(3));
    auto db = GridMeasure::dirac(g, g->point(20));
    auto mid = interpolate(da, db, 0.5);
    CHECK(mid.weights()[3] == doctest::Approx(0.5));
    CHECK(mid.weights()[20] == doctest::Approx(0.5));

    for (double theta : {0.0, 0.1, 0.25, 0.5, 0.75, 0.99, 1.0}) {
        auto m = interpolate(mu, nu, theta);
        CHECK(m.mass_error() <= 1e-12);
        for (double w : m.weights()) CHECK(w >= 0.0);
    }

    CHECK_THROWS_AS(interpolate(mu, nu, 1.5), UsageError);
    CHECK_THROWS_AS(interpolate(mu, nu, -0.1), UsageError);
}

TEST_CASE("sample_random_measure: determinism and normalization") {
    auto g = unit_grid(32);
    auto a = sample_random_measure(g, 12345, 1.0);
    auto b = sample_random_measure(g, 12345, 1.0);
    CHECK(a.weights() == b.weights());

    for (std::uint64_t seed = 0; seed < 1000; ++seed)
        CHECK(sample_random_measure(g, seed, 0.5).mass_error() <= 1e-12);
}

TEST_CASE("sample_random_measure: Dirichlet cell means match 1/N within 3 sigma") {
    const int n = 16;
    const double conc = 2.0;
    const int draws = 10000;
    auto g = unit_grid(n);
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (int d = 0; d < draws; ++d) {
        auto mu = sample_random_measure(g, 50000 + static_cast<std::uint64_t>(d), conc);
        for (int i = 0; i < n; ++i) mean[static_cast<std::size_t>(i)] += mu.weights()[static_cast<std::size_t>(i)];
    }
    // Dirichlet moments: E w_i = 1/N, Var w_i = (1/N)(1-1/N)/(N conc + 1)
    const double expect = 1.0 / n;
    const double var = expect * (1.0 - expect) / (n * conc + 1.0);
    const double sigma_mean = std::sqrt(var / draws);
    for (int i = 0; i < n; ++i) {
        mean[static_cast<std::size_t>(i)] /= draws;
        CHECK(std::abs(mean[static_cast<std::size_t>(i)] - expect) <= 3.0 * sigma_mean);
    }
}

TEST_CASE("measure JSON round trip and CSV shape") {
    auto g = unit_grid(16, BoundaryMode::torus);
    auto mu = sample_random_measure(g, 77, 1.2);
    auto back = measure_from_json(to_json(mu));
    CHECK(back.grid().same_discretization(mu.grid()));
    CHECK(back.weights() == mu.weights());

    std::ostringstream os;
    write_csv(os, mu);
    std::istringstream is(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 17); // header + one row per grid point
}
