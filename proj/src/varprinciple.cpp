#include "kslab/varprinciple.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "kslab/rng.hpp"

namespace kslab {

namespace {
constexpr std::uint64_t kStreamTrain = 31;
constexpr std::uint64_t kStreamHeldout = 32;
constexpr std::uint64_t kStreamTrainPaths = 33;
} // namespace

PerturbationSeries::PerturbationSeries(GaugeFunction gauge, std::vector<SpaceTimePoint> centers,
                                       std::vector<double> weights)
    : gauge_(std::move(gauge)), centers_(std::move(centers)), weights_(std::move(weights)) {
    if (centers_.empty() || centers_.size() != weights_.size())
        throw UsageError("PerturbationSeries: centers and weights must match and be nonempty");
}

double PerturbationSeries::value(const SpaceTimePoint& z) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < centers_.size(); ++k) acc += weights_[k] * gauge_(z, centers_[k]);
    return acc;
}

CylinderFunctional PerturbationSeries::spatial_cylinder(double t) const {
    const MetricFamily& fam = gauge_.family();
    const int m = fam.size();
    std::vector<SmoothFn> inner;
    inner.reserve(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) inner.push_back(SmoothFn{fam.fn(k), fam.dfn(k), fam.d2fn(k)});

    // g(r) = sum_j w_j [ (t - t_j)^2 + sum_k fam_weight_k (r_k - c_k^j)^2 ]
    std::vector<double> fam_w(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) fam_w[static_cast<std::size_t>(k)] = fam.weight(k);
    std::vector<std::vector<double>> c_moments;
    std::vector<double> time_terms;
    for (std::size_t j = 0; j < centers_.size(); ++j) {
        std::vector<double> cj(static_cast<std::size_t>(m));
        for (int k = 0; k < m; ++k)
            cj[static_cast<std::size_t>(k)] = centers_[j].mu.pair(fam.values(k));
        c_moments.push_back(std::move(cj));
        const double dt = t - centers_[j].t;
        time_terms.push_back(dt * dt);
    }
    auto weights = weights_;

    CylinderFunctional::Outer outer;
    outer.g = [weights, c_moments, time_terms, fam_w](std::span<const double> r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < weights.size(); ++j) {
            double q = time_terms[j];
            for (std::size_t k = 0; k < fam_w.size(); ++k) {
                const double d = r[k] - c_moments[j][k];
                q += fam_w[k] * d * d;
            }
            acc += weights[j] * q;
        }
        return acc;
    };
    outer.grad = [weights, c_moments, fam_w](std::span<const double> r, std::span<double> out) {
        for (std::size_t k = 0; k < fam_w.size(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < weights.size(); ++j)
                acc += weights[j] * 2.0 * fam_w[k] * (r[k] - c_moments[j][k]);
            out[k] = acc;
        }
    };
    const double total_weight = [&] {
        double acc = 0.0;
        for (double w : weights_) acc += w;
        return acc;
    }();
    outer.hess = [fam_w, total_weight](std::span<const double>, std::span<double> out) {
        const std::size_t m2 = fam_w.size();
        for (std::size_t a = 0; a < m2; ++a)
            for (std::size_t b = 0; b < m2; ++b)
                out[a * m2 + b] = a == b ? 2.0 * total_weight * fam_w[a] : 0.0;
    };
    return CylinderFunctional(std::move(inner), std::move(outer), "perturbation-series");
}

BpResult bp_search(const SampledObjective& objective, const GaugeFunction& gauge, double delta,
                   double eps, int start) {
    const std::size_t n = objective.points.size();
    if (n == 0 || objective.values.size() != n)
        throw UsageError("bp_search: objective needs matching nonempty points and values");
    if (!(delta > 0.0) || !(eps > 0.0)) throw UsageError("bp_search: delta and eps must be positive");
    if (start < 0 || static_cast<std::size_t>(start) >= n)
        throw UsageError("bp_search: start index out of range");

    double vmax = objective.values[0];
    double vabs = std::abs(objective.values[0]);
    for (double v : objective.values) {
        vmax = std::max(vmax, v);
        vabs = std::max(vabs, std::abs(v));
    }
    const double tol = 1e-12 * (1.0 + vabs + delta);
    if (objective.values[static_cast<std::size_t>(start)] < vmax - eps - tol)
        throw UsageError("bp_search: start point does not satisfy G(start) >= sup G - eps");

    std::vector<double> penalty(n, 0.0);
    std::vector<int> centers{start};
    int prev = start;
    int limit = -1;
    int stages = 0;
    for (std::size_t stage = 1; stage <= n + 1; ++stage) {
        const double w_prev = std::ldexp(1.0, -static_cast<int>(stage - 1)); // 2^{-(stage-1)}
        for (std::size_t i = 0; i < n; ++i)
            penalty[i] +=
                delta * w_prev *
                gauge(objective.points[i], objective.points[static_cast<std::size_t>(prev)]);
        int best = 0;
        double best_val = objective.values[0] - penalty[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double v = objective.values[i] - penalty[i];
            if (v > best_val) {
                best_val = v;
                best = static_cast<int>(i);
            }
        }
        ++stages;
        const double prev_val =
            objective.values[static_cast<std::size_t>(prev)] - penalty[static_cast<std::size_t>(prev)];
        if (prev_val >= best_val) { // the previous center still attains the maximum
            limit = prev;
            break;
        }
        centers.push_back(best);
        prev = best;
    }
    if (limit < 0)
        throw InternalError("bp_search: iteration failed to terminate on a finite sample set");

    // tail of the eventually-constant sequence folds into the last weight
    const int K = static_cast<int>(centers.size()) - 1;
    std::vector<double> weights(centers.size());
    for (int k = 0; k < K; ++k) weights[static_cast<std::size_t>(k)] = std::ldexp(1.0, -k);
    weights[static_cast<std::size_t>(K)] = std::ldexp(1.0, 1 - K);

    std::vector<SpaceTimePoint> center_points;
    center_points.reserve(centers.size());
    for (int idx : centers) center_points.push_back(objective.points[static_cast<std::size_t>(idx)]);

    BpResult res{limit, centers, stages,
                 PerturbationSeries(gauge, std::move(center_points), std::move(weights)),
                 BpCertificates{}};
    BpCertificates& cert = res.certificates;
    const SpaceTimePoint& z_bar = objective.points[static_cast<std::size_t>(limit)];

    cert.rho_bounds_pass = true;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const double rho = gauge(z_bar, objective.points[static_cast<std::size_t>(centers[k])]);
        const double bound = eps / (std::ldexp(1.0, static_cast<int>(k)) * delta);
        cert.rho_values.push_back(rho);
        cert.rho_limits.push_back(bound);
        cert.rho_bounds_pass = cert.rho_bounds_pass && rho <= bound + tol;
    }

    const double phi_bar = res.series.value(z_bar);
    cert.dom_lhs = objective.values[static_cast<std::size_t>(start)];
    cert.dom_rhs = objective.values[static_cast<std::size_t>(limit)] - delta * phi_bar;
    cert.dom_rhs_penalty = objective.values[static_cast<std::size_t>(limit)] -
                           penalty[static_cast<std::size_t>(limit)];
    cert.domination_pass = cert.dom_lhs <= cert.dom_rhs + tol;

    double worst = -std::numeric_limits<double>::infinity();
    const double best_perturbed = objective.values[static_cast<std::size_t>(limit)] -
                                  delta * phi_bar;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = objective.values[i] - delta * res.series.value(objective.points[i]);
        worst = std::max(worst, v - best_perturbed);
    }
    cert.max_maximality_violation = worst;
    cert.maximality_pass = worst <= tol;
    return res;
}

CylinderFunctional d2sq_functional(const MetricFamily& fam, const GridMeasure& mu0) {
    const int m = fam.size();
    std::vector<SmoothFn> inner;
    inner.reserve(static_cast<std::size_t>(m));
    std::vector<double> fam_w(static_cast<std::size_t>(m)), c0(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        inner.push_back(SmoothFn{fam.fn(k), fam.dfn(k), fam.d2fn(k)});
        fam_w[static_cast<std::size_t>(k)] = fam.weight(k);
        c0[static_cast<std::size_t>(k)] = mu0.pair(fam.values(k));
    }
    CylinderFunctional::Outer outer;
    outer.g = [fam_w, c0](std::span<const double> r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < fam_w.size(); ++k) {
            const double d = r[k] - c0[k];
            acc += fam_w[k] * d * d;
        }
        return acc;
    };
    outer.grad = [fam_w, c0](std::span<const double> r, std::span<double> out) {
        for (std::size_t k = 0; k < fam_w.size(); ++k) out[k] = 2.0 * fam_w[k] * (r[k] - c0[k]);
    };
    outer.hess = [fam_w](std::span<const double>, std::span<double> out) {
        const std::size_t m2 = fam_w.size();
        for (std::size_t a = 0; a < m2; ++a)
            for (std::size_t b = 0; b < m2; ++b) out[a * m2 + b] = a == b ? 2.0 * fam_w[a] : 0.0;
    };
    return CylinderFunctional(std::move(inner), std::move(outer), "d2sq");
}

D2sqDerivatives d2sq_derivatives(const GridMeasure& mu0, const MetricFamily& fam) {
    D2sqDerivatives out;
    out.bounds_pass = true;
    const DomainGrid& grid = fam.grid();
    for (int k = 0; k < fam.size(); ++k) {
        D2sqTermBound b;
        b.k = k;
        const auto& vals = fam.values(k);
        const double c0 = mu0.pair(vals);
        double max_f = 0.0, max_df = 0.0, max_centered = 0.0;
        for (int i = 0; i < grid.size(); ++i) {
            const double f = vals[static_cast<std::size_t>(i)];
            max_f = std::max(max_f, std::abs(f));
            max_centered = std::max(max_centered, std::abs(f - c0));
            max_df = std::max(max_df, std::abs(fam.deriv(k, grid.point(i))));
        }
        // sup over mu of |<mu - mu0, f_k>| is attained at a Dirac mass
        b.lf_sup = 2.0 * max_centered * max_f;
        b.lf2_sup = 2.0 * max_f * max_f;
        b.l1_sup = 2.0 * max_centered * max_df;
        b.l2_sup = 2.0 * max_df * max_df;
        b.l1_limit = 4.0 * fam.a(k);
        b.l2_limit = 2.0 * fam.a(k) * fam.a(k);
        b.pass = b.lf_sup <= b.lf_limit + 1e-12 && b.lf2_sup <= b.lf2_limit + 1e-12 &&
                 b.l1_sup <= b.l1_limit + 1e-12 && b.l2_sup <= b.l2_limit + 1e-12;
        out.bounds_pass = out.bounds_pass && b.pass;
        out.bounds.push_back(b);
    }

    MetricFamily fam_copy = fam;
    GridMeasure mu0_copy = mu0;
    out.lf.kind = DerivKind::lf;
    out.lf.centered = false;
    out.lf.eval1 = [fam_copy, mu0_copy](const GridMeasure& mu, double x) {
        double acc = 0.0;
        for (int k = 0; k < fam_copy.size(); ++k) {
            double diff = 0.0;
            const auto& vals = fam_copy.values(k);
            for (std::size_t i = 0; i < vals.size(); ++i)
                diff += (mu.weights()[i] - mu0_copy.weights()[i]) * vals[i];
            acc += fam_copy.weight(k) * 2.0 * diff * fam_copy.eval(k, x);
        }
        return acc;
    };
    out.lf2.kind = DerivKind::lf2;
    out.lf2.eval2 = [fam_copy](const GridMeasure&, double x, double y) {
        double acc = 0.0;
        for (int k = 0; k < fam_copy.size(); ++k)
            acc += fam_copy.weight(k) * 2.0 * fam_copy.eval(k, x) * fam_copy.eval(k, y);
        return acc;
    };
    return out;
}

int MomentMonomial::weighted_degree() const {
    int acc = 0;
    for (std::size_t j = 0; j < powers.size(); ++j)
        acc += static_cast<int>(j + 1) * powers[j];
    return acc;
}

double MomentMonomial::eval(std::span<const double> moments) const {
    double acc = 1.0;
    for (std::size_t j = 0; j < powers.size(); ++j)
        for (int p = 0; p < powers[j]; ++p) acc *= moments[j];
    return acc;
}

namespace {

void enumerate_monomials(int degree, int order, std::vector<int>& current,
                         std::vector<MomentMonomial>& out) {
    if (order > degree) {
        int used = 0;
        for (std::size_t j = 0; j < current.size(); ++j)
            used += static_cast<int>(j + 1) * current[j];
        if (used <= degree) out.push_back(MomentMonomial{current});
        return;
    }
    int used = 0;
    for (std::size_t j = 0; j + 1 < static_cast<std::size_t>(order); ++j)
        used += static_cast<int>(j + 1) * current[j];
    const int max_p = (degree - used) / order;
    for (int p = 0; p <= max_p; ++p) {
        current[static_cast<std::size_t>(order - 1)] = p;
        enumerate_monomials(degree, order + 1, current, out);
    }
    current[static_cast<std::size_t>(order - 1)] = 0;
}

} // namespace

std::vector<MomentMonomial> moment_basis(int degree) {
    if (degree < 0) throw UsageError("moment_basis: degree must be >= 0");
    std::vector<MomentMonomial> out;
    if (degree == 0) {
        out.push_back(MomentMonomial{{}});
        return out;
    }
    std::vector<int> current(static_cast<std::size_t>(degree), 0);
    enumerate_monomials(degree, 1, current, out);
    std::sort(out.begin(), out.end(), [](const MomentMonomial& a, const MomentMonomial& b) {
        const int da = a.weighted_degree(), db = b.weighted_degree();
        if (da != db) return da < db;
        return a.powers < b.powers;
    });
    return out;
}

PolynomialFunctional::PolynomialFunctional(int degree, std::vector<MomentMonomial> basis,
                                           std::vector<double> coeffs)
    : degree_(degree), max_order_(0), basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
    if (basis_.size() != coeffs_.size())
        throw UsageError("PolynomialFunctional: basis/coefficient size mismatch");
    for (const auto& m : basis_)
        for (std::size_t j = 0; j < m.powers.size(); ++j)
            if (m.powers[j] > 0) max_order_ = std::max(max_order_, static_cast<int>(j + 1));
}

double PolynomialFunctional::value(const GridMeasure& mu) const {
    std::vector<double> moments(static_cast<std::size_t>(std::max(max_order_, 1)), 0.0);
    for (int j = 1; j <= max_order_; ++j)
        moments[static_cast<std::size_t>(j - 1)] =
            mu.pair([j](double x) { return std::pow(x, j); });
    double acc = 0.0;
    for (std::size_t i = 0; i < basis_.size(); ++i) acc += coeffs_[i] * basis_[i].eval(moments);
    return acc;
}

CylinderFunctional PolynomialFunctional::to_cylinder() const {
    const int order = std::max(max_order_, 1);
    std::vector<SmoothFn> inner;
    for (int j = 1; j <= order; ++j) {
        std::vector<double> mono(static_cast<std::size_t>(j + 1), 0.0);
        mono[static_cast<std::size_t>(j)] = 1.0;
        inner.push_back(smooth_poly(std::move(mono)));
    }
    // pad multi-indices to the inner arity
    std::vector<std::vector<int>> alphas;
    for (const auto& m : basis_) {
        std::vector<int> a(static_cast<std::size_t>(order), 0);
        for (std::size_t j = 0; j < m.powers.size() && j < a.size(); ++j) a[j] = m.powers[j];
        alphas.push_back(std::move(a));
    }
    auto coeffs = coeffs_;

    auto term_eval = [](const std::vector<int>& alpha, std::span<const double> r, int skip_a,
                        int skip_b) {
        // product of r_j^{alpha_j} with one or two powers dropped (for
        // derivatives); skip indices are -1 when unused
        double acc = 1.0;
        for (std::size_t j = 0; j < alpha.size(); ++j) {
            int p = alpha[j];
            if (static_cast<int>(j) == skip_a) --p;
            if (static_cast<int>(j) == skip_b) --p;
            if (p < 0) return 0.0;
            for (int q = 0; q < p; ++q) acc *= r[j];
        }
        return acc;
    };

    CylinderFunctional::Outer outer;
    outer.g = [alphas, coeffs, term_eval](std::span<const double> r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < alphas.size(); ++i)
            acc += coeffs[i] * term_eval(alphas[i], r, -1, -1);
        return acc;
    };
    outer.grad = [alphas, coeffs, term_eval](std::span<const double> r, std::span<double> out) {
        for (std::size_t k = 0; k < out.size(); ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < alphas.size(); ++i) {
                const int p = alphas[i][k];
                if (p > 0)
                    acc += coeffs[i] * p * term_eval(alphas[i], r, static_cast<int>(k), -1);
            }
            out[k] = acc;
        }
    };
    outer.hess = [alphas, coeffs, term_eval](std::span<const double> r, std::span<double> out) {
        const std::size_t m = r.size();
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b) {
                double acc = 0.0;
                for (std::size_t i = 0; i < alphas.size(); ++i) {
                    const int pa = alphas[i][a];
                    const int pb = alphas[i][b];
                    if (a == b) {
                        if (pa > 1)
                            acc += coeffs[i] * pa * (pa - 1) *
                                   term_eval(alphas[i], r, static_cast<int>(a),
                                             static_cast<int>(a));
                    } else if (pa > 0 && pb > 0) {
                        acc += coeffs[i] * pa * pb *
                               term_eval(alphas[i], r, static_cast<int>(a), static_cast<int>(b));
                    }
                }
                out[a * m + b] = acc;
            }
    };
    return CylinderFunctional(std::move(inner), std::move(outer), "moment-polynomial");
}

PolynomialFunctional embed(const PolynomialFunctional& p, int degree) {
    if (degree < p.degree()) throw UsageError("embed: target degree below the polynomial's");
    auto basis = moment_basis(degree);
    std::vector<double> coeffs(basis.size(), 0.0);
    for (std::size_t i = 0; i < p.basis().size(); ++i) {
        std::vector<int> padded = p.basis()[i].powers;
        padded.resize(static_cast<std::size_t>(std::max(degree, 1)), 0);
        bool placed = false;
        for (std::size_t k = 0; k < basis.size(); ++k) {
            std::vector<int> bp = basis[k].powers;
            bp.resize(padded.size(), 0);
            if (bp == padded) {
                coeffs[k] = p.coeffs()[i];
                placed = true;
                break;
            }
        }
        if (!placed) throw InternalError("embed: nested basis lookup failed");
    }
    return PolynomialFunctional(degree, std::move(basis), std::move(coeffs));
}

PolyFit poly_fit(const TerminalFunctional& phi, int degree, std::span<const GridMeasure> train,
                 std::span<const GridMeasure> heldout, const PolyFit* previous) {
    if (train.empty()) throw UsageError("poly_fit: need a nonempty training sample");
    if (degree < 0) throw UsageError("poly_fit: degree must be >= 0");
    auto basis = moment_basis(degree);
    const int nf = static_cast<int>(basis.size());
    const int ns = static_cast<int>(train.size());

    auto features_of = [&](const GridMeasure& mu) {
        std::vector<double> moments(static_cast<std::size_t>(std::max(degree, 1)), 0.0);
        for (int j = 1; j <= degree; ++j)
            moments[static_cast<std::size_t>(j - 1)] =
                mu.pair([j](double x) { return std::pow(x, j); });
        std::vector<double> feats(static_cast<std::size_t>(nf));
        for (int k = 0; k < nf; ++k)
            feats[static_cast<std::size_t>(k)] = basis[static_cast<std::size_t>(k)].eval(moments);
        return feats;
    };

    Eigen::MatrixXd X(ns, nf);
    Eigen::VectorXd y(ns);
    for (int s = 0; s < ns; ++s) {
        const auto feats = features_of(train[static_cast<std::size_t>(s)]);
        for (int k = 0; k < nf; ++k) X(s, k) = feats[static_cast<std::size_t>(k)];
        y(s) = phi(train[static_cast<std::size_t>(s)]);
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    Eigen::VectorXd beta = cod.solve(y); // minimum-norm least squares

    PolyFit out{PolynomialFunctional(degree, basis,
                                     std::vector<double>(beta.data(), beta.data() + nf)),
                PolyFitReport{}};
    out.report.degree = degree;
    out.report.n_features = nf;
    out.report.rank = static_cast<int>(cod.rank());
    out.report.rank_deficient = out.report.rank < nf;

    double sup = 0.0, sse = 0.0;
    const Eigen::VectorXd fitted = X * beta;
    for (int s = 0; s < ns; ++s) {
        const double e = std::abs(fitted(s) - y(s));
        sup = std::max(sup, e);
        sse += e * e;
    }
    out.report.training_sup_error = sup;
    out.report.training_rms_error = std::sqrt(sse / ns);

    if (previous && previous->report.training_sup_error < out.report.training_sup_error) {
        out.fit = embed(previous->fit, degree);
        out.report.training_sup_error = previous->report.training_sup_error;
        out.report.training_rms_error = previous->report.training_rms_error;
        out.report.reused_lower_degree = true;
    }

    if (!heldout.empty()) {
        double hsup = 0.0;
        for (const auto& mu : heldout)
            hsup = std::max(hsup, std::abs(out.fit.value(mu) - phi(mu)));
        out.report.heldout_sup_error = hsup;
    }
    return out;
}

ComparisonReport comparison_pipeline(const TerminalFunctional& phi, const GridMeasure& mu0,
                                     double t0, double T, const OperatorSet& ops,
                                     const Coefficients& coeffs, std::uint64_t seed,
                                     const ComparisonConfig& cfg) {
    std::vector<GridMeasure> train, heldout;
    train.reserve(static_cast<std::size_t>(cfg.training_samples));
    const int n_dirichlet = cfg.training_samples - cfg.path_training_samples;
    for (int i = 0; i < n_dirichlet; ++i)
        train.push_back(sample_random_measure(ops.grid, derive_seed(seed, kStreamTrain,
                                                                    static_cast<std::uint64_t>(i)),
                                              cfg.dirichlet_concentration));
    SolverDiagnostics train_diag;
    if (cfg.path_training_samples > 0) {
        SolveUConfig tcfg = cfg.solve;
        tcfg.paths = cfg.path_training_samples;
        auto path_samples =
            terminal_ensemble(mu0, t0, T, ops, coeffs, derive_seed(seed, kStreamTrainPaths), tcfg,
                              &train_diag);
        for (auto& m : path_samples) train.push_back(std::move(m));
    }
    for (int i = 0; i < cfg.heldout_samples; ++i)
        heldout.push_back(sample_random_measure(
            ops.grid, derive_seed(seed, kStreamHeldout, static_cast<std::uint64_t>(i)),
            cfg.dirichlet_concentration));

    ComparisonReport rep;
    rep.diag = train_diag;
    // one common set of solver paths backs every estimate
    const auto terminals =
        terminal_ensemble(mu0, t0, T, ops, coeffs, seed, cfg.solve, &rep.diag);
    rep.paths = static_cast<int>(terminals.size());
    std::vector<double> phi_vals(terminals.size());
    double mean = 0.0;
    for (std::size_t j = 0; j < terminals.size(); ++j) {
        phi_vals[j] = phi(terminals[j]);
        mean += phi_vals[j];
    }
    mean /= static_cast<double>(terminals.size());
    double var = 0.0;
    for (double v : phi_vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(terminals.size() - 1);
    rep.u = mean;
    rep.u_std_error = std::sqrt(var / static_cast<double>(terminals.size()));

    std::optional<PolyFit> previous;
    for (int degree : cfg.degrees) {
        auto fit = poly_fit(phi, degree, train, heldout, previous ? &*previous : nullptr);
        ComparisonRow row;
        row.degree = degree;
        row.training_sup = fit.report.training_sup_error;
        row.heldout_sup = fit.report.heldout_sup_error;
        row.rank_deficient = fit.report.rank_deficient;
        double un = 0.0, gap = 0.0;
        for (std::size_t j = 0; j < terminals.size(); ++j) {
            const double v = fit.fit.value(terminals[j]);
            un += v;
            gap = std::max(gap, std::abs(v - phi_vals[j]));
        }
        un /= static_cast<double>(terminals.size());
        row.u_n = un;
        row.diff = std::abs(un - rep.u);
        row.sup_gap_paths = gap;
        row.bound_ok = row.diff <= gap * (1.0 + 1e-12) + 1e-15;
        rep.rows.push_back(row);
        previous = std::move(fit);
    }
    return rep;
}

} // namespace kslab
