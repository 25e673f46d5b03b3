#include "kslab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "kslab/rng.hpp"
#include "json.hpp"

namespace kslab {

namespace {
constexpr double kMassTolerance = 1e-12;
}

BoundaryMode boundary_mode_from_string(const std::string& s) {
    if (s == "torus") return BoundaryMode::torus;
    if (s == "reflecting") return BoundaryMode::reflecting;
    throw UsageError("unknown boundary mode '" + s + "' (expected torus or reflecting)");
}

std::string to_string(BoundaryMode mode) {
    return mode == BoundaryMode::torus ? "torus" : "reflecting";
}

DomainGrid::DomainGrid(double lower, double upper, int n, BoundaryMode mode)
    : lower_(lower), upper_(upper), n_(n), mode_(mode) {
    if (!(upper > lower)) throw UsageError("DomainGrid: upper must exceed lower");
    if (n < 2) throw UsageError("DomainGrid: need at least 2 points");
    dx_ = (mode == BoundaryMode::torus) ? (upper - lower) / n : (upper - lower) / (n - 1);
    points_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) points_[static_cast<std::size_t>(i)] = lower + i * dx_;
}

std::shared_ptr<const DomainGrid> DomainGrid::make(double lower, double upper, int n,
                                                   BoundaryMode mode) {
    return std::make_shared<const DomainGrid>(lower, upper, n, mode);
}

int DomainGrid::nearest_index(double x) const {
    double i = std::round((x - lower_) / dx_);
    if (mode_ == BoundaryMode::torus) {
        long k = static_cast<long>(i);
        k %= n_;
        if (k < 0) k += n_;
        return static_cast<int>(k);
    }
    return static_cast<int>(std::clamp(i, 0.0, static_cast<double>(n_ - 1)));
}

std::vector<double> DomainGrid::sample(const std::function<double(double)>& f) const {
    std::vector<double> out(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) out[i] = f(points_[i]);
    return out;
}

bool DomainGrid::same_discretization(const DomainGrid& other) const {
    return lower_ == other.lower_ && upper_ == other.upper_ && n_ == other.n_ &&
           mode_ == other.mode_;
}

GridMeasure::GridMeasure(std::shared_ptr<const DomainGrid> grid, std::vector<double> weights)
    : grid_(std::move(grid)), w_(std::move(weights)) {
    if (!grid_) throw UsageError("GridMeasure: null grid");
    if (static_cast<int>(w_.size()) != grid_->size())
        throw UsageError("GridMeasure: weight count does not match grid size");
    double sum = 0.0;
    for (double w : w_) {
        if (!(w >= 0.0)) throw UsageError("GridMeasure: negative or NaN weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kMassTolerance)
        throw UsageError("GridMeasure: weights sum to " + std::to_string(sum) +
                         ", outside 1 +/- 1e-12");
}

GridMeasure GridMeasure::uniform(std::shared_ptr<const DomainGrid> grid) {
    const int n = grid->size();
    std::vector<double> w(static_cast<std::size_t>(n), 1.0 / n);
    return GridMeasure(std::move(grid), std::move(w));
}

GridMeasure GridMeasure::dirac(std::shared_ptr<const DomainGrid> grid, double x) {
    std::vector<double> w(static_cast<std::size_t>(grid->size()), 0.0);
    w[static_cast<std::size_t>(grid->nearest_index(x))] = 1.0;
    return GridMeasure(std::move(grid), std::move(w));
}

double GridMeasure::pair(std::span<const double> phi_samples) const {
    if (phi_samples.size() != w_.size())
        throw UsageError("pair: test function has " + std::to_string(phi_samples.size()) +
                         " samples, grid has " + std::to_string(w_.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) acc += w_[i] * phi_samples[i];
    return acc;
}

double GridMeasure::pair(const std::function<double(double)>& phi) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) acc += w_[i] * phi(grid_->point(static_cast<int>(i)));
    return acc;
}

double GridMeasure::mass_error() const {
    const double sum = std::accumulate(w_.begin(), w_.end(), 0.0);
    return std::abs(sum - 1.0);
}

GridMeasure interpolate(const GridMeasure& mu, const GridMeasure& nu, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0))
        throw UsageError("interpolate: theta must lie in [0, 1]");
    if (!mu.grid().same_discretization(nu.grid()))
        throw UsageError("interpolate: measures live on different grids");
    std::vector<double> w(mu.weights().size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = theta * mu.weights()[i] + (1.0 - theta) * nu.weights()[i];
    return GridMeasure(mu.grid_ptr(), std::move(w));
}

GridMeasure sample_random_measure(std::shared_ptr<const DomainGrid> grid, std::uint64_t seed,
                                  double concentration) {
    if (!(concentration > 0.0))
        throw UsageError("sample_random_measure: concentration must be positive");
    auto rng = make_rng(derive_seed(seed, /*stream=*/0x6d656173ull));
    std::gamma_distribution<double> gamma(concentration, 1.0);
    std::vector<double> w(static_cast<std::size_t>(grid->size()));
    double sum = 0.0;
    for (double& wi : w) {
        wi = gamma(rng);
        sum += wi;
    }
    if (sum <= 0.0) { // all-zero draw is possible only for tiny concentration
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    } else {
        for (double& wi : w) wi /= sum;
    }
    // kill rounding drift so the constructor invariant holds exactly
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& wi : w) wi /= total;
    return GridMeasure(std::move(grid), std::move(w));
}

MetricFamily MetricFamily::cosine(std::shared_ptr<const DomainGrid> grid, int m) {
    if (m < 1) throw UsageError("MetricFamily: need m >= 1 test functions");
    MetricFamily fam;
    fam.grid_ = grid;
    fam.fns_.reserve(static_cast<std::size_t>(m));
    const double lower = grid->lower();
    const double len = grid->length();
    for (int k = 0; k < m; ++k) {
        Fn fn;
        if (k == 0) {
            fn.f = [](double) { return 1.0; };
            fn.df = [](double) { return 0.0; };
            fn.d2f = [](double) { return 0.0; };
            fn.a = 0.0;
        } else {
            const double omega = k * M_PI / len;
            fn.f = [omega, lower](double x) { return std::cos(omega * (x - lower)); };
            fn.df = [omega, lower](double x) { return -omega * std::sin(omega * (x - lower)); };
            fn.d2f = [omega, lower](double x) {
                return -omega * omega * std::cos(omega * (x - lower));
            };
            fn.a = omega; // max over K of |f'| in closed form
        }
        fn.q = std::max({fn.a, fn.a * fn.a, 1.0});
        fn.weight = std::ldexp(1.0, -(k + 1)) / fn.q;
        fn.values = grid->sample(fn.f);
        fam.fns_.push_back(std::move(fn));
    }
    return fam;
}

double MetricFamily::d2sq(const GridMeasure& mu, const GridMeasure& nu) const {
    if (!mu.grid().same_discretization(*grid_) || !nu.grid().same_discretization(*grid_))
        throw UsageError("d2: measures do not live on the family's grid");
    double acc = 0.0;
    for (const Fn& fn : fns_) {
        double diff = 0.0;
        for (std::size_t i = 0; i < fn.values.size(); ++i)
            diff += (mu.weights()[i] - nu.weights()[i]) * fn.values[i];
        acc += fn.weight * diff * diff;
    }
    return acc;
}

double MetricFamily::d2(const GridMeasure& mu, const GridMeasure& nu) const {
    return std::sqrt(d2sq(mu, nu));
}

std::string to_json(const GridMeasure& mu) {
    nlohmann::json j;
    j["grid"] = {{"lower", mu.grid().lower()},
                 {"upper", mu.grid().upper()},
                 {"n", mu.grid().size()},
                 {"boundary", to_string(mu.grid().boundary())}};
    j["weights"] = mu.weights();
    return j.dump();
}

GridMeasure measure_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    auto grid = DomainGrid::make(j.at("grid").at("lower").get<double>(),
                                 j.at("grid").at("upper").get<double>(),
                                 j.at("grid").at("n").get<int>(),
                                 boundary_mode_from_string(j.at("grid").at("boundary")));
    return GridMeasure(grid, j.at("weights").get<std::vector<double>>());
}

void write_csv(std::ostream& os, const GridMeasure& mu) {
    os << "index,x,weight\n";
    for (int i = 0; i < mu.size(); ++i)
        os << i << ',' << mu.grid().point(i) << ',' << mu.weights()[static_cast<std::size_t>(i)]
           << '\n';
}

} // namespace kslab
