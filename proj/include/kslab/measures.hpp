#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kslab/errors.hpp"

namespace kslab {

enum class BoundaryMode { torus, reflecting };

BoundaryMode boundary_mode_from_string(const std::string& s);
std::string to_string(BoundaryMode mode);

/// Uniform grid over the compact domain K = [lower, upper].
/// torus mode drops the duplicate right endpoint (spacing (upper-lower)/n),
/// reflecting mode keeps both ends (spacing (upper-lower)/(n-1)).
class DomainGrid {
public:
    DomainGrid(double lower, double upper, int n, BoundaryMode mode);

    static std::shared_ptr<const DomainGrid> make(double lower, double upper, int n,
                                                  BoundaryMode mode);

    double lower() const { return lower_; }
    double upper() const { return upper_; }
    double length() const { return upper_ - lower_; }
    double dx() const { return dx_; }
    int size() const { return n_; }
    BoundaryMode boundary() const { return mode_; }

    double point(int i) const { return points_[static_cast<std::size_t>(i)]; }
    std::span<const double> points() const { return points_; }

    /// Index of the grid point closest to x (Dirac snapping).
    int nearest_index(double x) const;

    std::vector<double> sample(const std::function<double(double)>& f) const;

    bool same_discretization(const DomainGrid& other) const;

private:
    double lower_, upper_, dx_;
    int n_;
    BoundaryMode mode_;
    std::vector<double> points_;
};

/// Probability measure supported on the grid points: nonnegative weights
/// summing to one (tolerance 1e-12, checked at construction).
class GridMeasure {
public:
    GridMeasure(std::shared_ptr<const DomainGrid> grid, std::vector<double> weights);

    static GridMeasure uniform(std::shared_ptr<const DomainGrid> grid);
    /// Point mass snapped to the nearest grid cell.
    static GridMeasure dirac(std::shared_ptr<const DomainGrid> grid, double x);

    const DomainGrid& grid() const { return *grid_; }
    std::shared_ptr<const DomainGrid> grid_ptr() const { return grid_; }
    const std::vector<double>& weights() const { return w_; }
    int size() const { return static_cast<int>(w_.size()); }

    /// <mu, phi> for phi given by its grid samples.
    double pair(std::span<const double> phi_samples) const;
    /// <mu, phi> for a callable phi, sampled at the grid points.
    double pair(const std::function<double(double)>& phi) const;

    double mass_error() const; // |sum w - 1|

private:
    std::shared_ptr<const DomainGrid> grid_;
    std::vector<double> w_;
};

/// Convex combination theta*mu + (1-theta)*nu; theta in [0, 1].
GridMeasure interpolate(const GridMeasure& mu, const GridMeasure& nu, double theta);

/// Dirichlet(concentration, ..., concentration) weights; deterministic per seed.
GridMeasure sample_random_measure(std::shared_ptr<const DomainGrid> grid, std::uint64_t seed,
                                  double concentration);

/// Test-function family {f_k} behind the weak-convergence metric:
/// f_1 = 1 followed by cosines cos(k pi (x-lower)/L), k = 1..m-1, all with
/// sup norm <= 1, a_k = max |f_k'| and q_k = max(a_k, a_k^2, 1).
/// d2 truncates the defining series at m terms, so it is a pseudometric
/// that increases to the full metric as m grows; with a fixed family the
/// truncation is the object under study.
class MetricFamily {
public:
    static MetricFamily cosine(std::shared_ptr<const DomainGrid> grid, int m);

    int size() const { return static_cast<int>(fns_.size()); }
    const DomainGrid& grid() const { return *grid_; }
    std::shared_ptr<const DomainGrid> grid_ptr() const { return grid_; }

    double eval(int k, double x) const { return fns_[static_cast<std::size_t>(k)].f(x); }
    double deriv(int k, double x) const { return fns_[static_cast<std::size_t>(k)].df(x); }
    double deriv2(int k, double x) const { return fns_[static_cast<std::size_t>(k)].d2f(x); }
    const std::vector<double>& values(int k) const {
        return fns_[static_cast<std::size_t>(k)].values;
    }
    double a(int k) const { return fns_[static_cast<std::size_t>(k)].a; }
    double q(int k) const { return fns_[static_cast<std::size_t>(k)].q; }
    /// Series weight 2^{-(k+1)} / q_k of term k (0-based).
    double weight(int k) const { return fns_[static_cast<std::size_t>(k)].weight; }

    std::function<double(double)> fn(int k) const { return fns_[static_cast<std::size_t>(k)].f; }
    std::function<double(double)> dfn(int k) const { return fns_[static_cast<std::size_t>(k)].df; }
    std::function<double(double)> d2fn(int k) const {
        return fns_[static_cast<std::size_t>(k)].d2f;
    }

    double d2sq(const GridMeasure& mu, const GridMeasure& nu) const;
    double d2(const GridMeasure& mu, const GridMeasure& nu) const;

private:
    struct Fn {
        std::function<double(double)> f, df, d2f;
        std::vector<double> values;
        double a = 0.0;
        double q = 1.0;
        double weight = 0.0;
    };
    std::shared_ptr<const DomainGrid> grid_;
    std::vector<Fn> fns_;
};

// --- serialization -----------------------------------------------------

std::string to_json(const GridMeasure& mu);
GridMeasure measure_from_json(const std::string& text);
/// CSV columns: index, x, weight.
void write_csv(std::ostream& os, const GridMeasure& mu);

} // namespace kslab
