#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kslab/rng.hpp"
#include "kslab/runner.hpp"

namespace py = pybind11;
using namespace kslab;

namespace {

py::dict diag_dict(const SolverDiagnostics& d) {
    py::dict out;
    out["max_mass_error"] = d.max_mass_error;
    out["min_weight"] = d.min_weight;
    out["clipped_mass_total"] = d.clipped_mass_total;
    out["steps_clipped"] = d.steps_clipped;
    out["resample_count"] = d.resample_count;
    out["min_ess"] = d.min_ess;
    return out;
}

py::dict breakdown_dict(const GeneratorBreakdown& b) {
    py::dict out;
    out["compact_first"] = b.compact_first;
    out["compact_second"] = b.compact_second;
    out["compact_total"] = b.compact_total;
    out["drift"] = b.drift;
    out["diff_sigma"] = b.diff_sigma;
    out["diff_sigma_bar"] = b.diff_sigma_bar;
    out["obs_sq"] = b.obs_sq;
    out["corr_sq"] = b.corr_sq;
    out["mean_sq"] = b.mean_sq;
    out["cross_obs_corr"] = b.cross_obs_corr;
    out["cross_obs_mean"] = b.cross_obs_mean;
    out["cross_corr_mean"] = b.cross_corr_mean;
    out["expanded_total"] = b.expanded_total;
    out["agreement"] = b.agreement();
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "grid-measure Kushner-Stratonovich dynamics and the backward Kolmogorov "
              "equation on probability measures";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

    py::class_<DomainGrid, std::shared_ptr<DomainGrid>>(m, "Grid")
        .def(py::init([](double lower, double upper, int n, const std::string& boundary) {
                 return std::make_shared<DomainGrid>(lower, upper, n,
                                                     boundary_mode_from_string(boundary));
             }),
             py::arg("lower") = 0.0, py::arg("upper") = 1.0, py::arg("n") = 128,
             py::arg("boundary") = "torus")
        .def_property_readonly("lower", &DomainGrid::lower)
        .def_property_readonly("upper", &DomainGrid::upper)
        .def_property_readonly("dx", &DomainGrid::dx)
        .def_property_readonly("n", &DomainGrid::size)
        .def_property_readonly("boundary",
                               [](const DomainGrid& g) { return to_string(g.boundary()); })
        .def("points",
             [](const DomainGrid& g) {
                 return std::vector<double>(g.points().begin(), g.points().end());
             })
        .def("nearest_index", &DomainGrid::nearest_index);

    py::class_<GridMeasure>(m, "Measure")
        .def(py::init([](std::shared_ptr<DomainGrid> grid, std::vector<double> w) {
                 return GridMeasure(std::move(grid), std::move(w));
             }),
             py::arg("grid"), py::arg("weights"))
        .def_static("uniform",
                    [](std::shared_ptr<DomainGrid> g) { return GridMeasure::uniform(g); })
        .def_static("dirac", [](std::shared_ptr<DomainGrid> g, double x) {
            return GridMeasure::dirac(g, x);
        })
        .def_property_readonly("weights",
                               [](const GridMeasure& mu) { return mu.weights(); })
        .def("pair",
             [](const GridMeasure& mu, const std::vector<double>& phi) { return mu.pair(phi); })
        .def("pair_fn",
             [](const GridMeasure& mu, const std::function<double(double)>& phi) {
                 return mu.pair(phi);
             })
        .def("mass_error", &GridMeasure::mass_error)
        .def("to_json", [](const GridMeasure& mu) { return to_json(mu); });

    m.def("measure_from_json", &measure_from_json);
    m.def(
        "interpolate",
        [](const GridMeasure& a, const GridMeasure& b, double theta) {
            return interpolate(a, b, theta);
        },
        py::arg("mu"), py::arg("nu"), py::arg("theta"));
    m.def(
        "sample_random_measure",
        [](std::shared_ptr<DomainGrid> g, std::uint64_t seed, double conc) {
            return sample_random_measure(g, seed, conc);
        },
        py::arg("grid"), py::arg("seed"), py::arg("concentration") = 1.0);

    py::class_<MetricFamily>(m, "MetricFamily")
        .def_static("cosine",
                    [](std::shared_ptr<DomainGrid> g, int size) {
                        return MetricFamily::cosine(g, size);
                    },
                    py::arg("grid"), py::arg("m") = 16)
        .def_property_readonly("size", &MetricFamily::size)
        .def("a", &MetricFamily::a)
        .def("q", &MetricFamily::q)
        .def("d2", &MetricFamily::d2)
        .def("d2sq", &MetricFamily::d2sq);

    py::class_<SmoothFn>(m, "SmoothFn")
        .def("__call__", [](const SmoothFn& f, double x) { return f.f(x); })
        .def("deriv", [](const SmoothFn& f, double x) { return f.df(x); })
        .def("deriv2", [](const SmoothFn& f, double x) { return f.d2f(x); });
    m.def("smooth_poly", &smooth_poly, py::arg("coeffs"));
    m.def("smooth_cos", &smooth_cos, py::arg("freq"), py::arg("phase") = 0.0,
          py::arg("amp") = 1.0);
    m.def("smooth_sin", &smooth_sin, py::arg("freq"), py::arg("phase") = 0.0,
          py::arg("amp") = 1.0);

    py::class_<CylinderFunctional>(m, "CylinderFunctional")
        .def_property_readonly("arity", &CylinderFunctional::arity)
        .def_property_readonly("label", &CylinderFunctional::label)
        .def("value", &CylinderFunctional::value)
        .def("lf", &CylinderFunctional::lf, py::arg("mu"), py::arg("x"),
             py::arg("centered") = true)
        .def("lf2", &CylinderFunctional::lf2)
        .def("l1", &CylinderFunctional::l1)
        .def("l2", &CylinderFunctional::l2)
        .def("moments", &CylinderFunctional::moments);
    m.def("cyl_constant", &cyl_constant);
    m.def("cyl_linear", &cyl_linear, py::arg("phi"), py::arg("label") = "");
    m.def("cyl_moment_power", &cyl_moment_power, py::arg("phi"), py::arg("power"),
          py::arg("label") = "");
    m.def("random_cylinder", &random_cylinder, py::arg("seed"));
    m.def("verify_lfd_identity", &verify_lfd_identity, py::arg("f"), py::arg("mu"), py::arg("nu"),
          py::arg("n_quad") = 32);

    py::class_<Coefficients>(m, "Coefficients")
        .def_property_readonly("name", [](const Coefficients& c) { return c.name; })
        .def("b", [](const Coefficients& c, double x) { return c.b(x); })
        .def("sigma", [](const Coefficients& c, double x) { return c.sigma(x); })
        .def("sigma_bar", [](const Coefficients& c, double x) { return c.sigma_bar(x); })
        .def("h", [](const Coefficients& c, double x) { return c.h(x); });
    m.def("coefficients_preset", &coefficients_preset, py::arg("name"),
          py::arg("params") = std::map<std::string, double>{});
    m.def("random_coefficients", &random_coefficients, py::arg("seed"));

    py::class_<OperatorSet>(m, "Operators")
        .def_property_readonly("stability_dt_bound",
                               [](const OperatorSet& ops) { return stability_dt_bound(ops); })
        .def("apply_a",
             [](const OperatorSet& ops, const std::vector<double>& phi) {
                 return apply_a(ops, phi);
             })
        .def("apply_b", [](const OperatorSet& ops, const std::vector<double>& phi) {
            return apply_b(ops, phi);
        });
    m.def(
        "build_operators",
        [](const Coefficients& c, std::shared_ptr<DomainGrid> g) {
            return build_operators(c, g);
        },
        py::arg("coeffs"), py::arg("grid"));

    m.def("check_hypotheses", [](const Coefficients& c, const DomainGrid& g) {
        auto rep = check_hypotheses(c, g);
        py::dict out;
        out["pass"] = rep.pass;
        out["ellipticity_pass"] = rep.ellipticity_pass;
        out["min_sigma_sq"] = rep.min_sigma_sq;
        py::list bounds, lipschitz;
        for (const auto& e : rep.bounds)
            bounds.append(py::make_tuple(e.name, e.observed, e.declared, e.pass));
        for (const auto& e : rep.lipschitz)
            lipschitz.append(py::make_tuple(e.name, e.observed, e.declared, e.pass));
        out["bounds"] = bounds;
        out["lipschitz"] = lipschitz;
        return out;
    });
    m.def(
        "check_invariance",
        [](const Coefficients& c, const DomainGrid& g, bool flip) {
            auto rep = check_invariance(c, g, flip);
            py::dict out;
            out["pass"] = rep.pass;
            out["applicable"] = rep.applicable;
            py::list eps;
            for (const auto& ep : rep.endpoints)
                eps.append(py::make_tuple(ep.x, ep.normal, ep.a_value, ep.degeneracy_pass,
                                          ep.drift_value, ep.drift_pass));
            out["endpoints"] = eps;
            return out;
        },
        py::arg("coeffs"), py::arg("grid"), py::arg("flip_drift_sign") = false);

    py::class_<NoisePath>(m, "NoisePath")
        .def_static("brownian", &NoisePath::brownian, py::arg("seed"), py::arg("t0"),
                    py::arg("T"), py::arg("dt"))
        .def_static("frozen", &NoisePath::frozen, py::arg("t0"), py::arg("T"), py::arg("dt"))
        .def("coarsened", &NoisePath::coarsened)
        .def_property_readonly("dt", [](const NoisePath& p) { return p.dt; })
        .def_property_readonly("steps", &NoisePath::steps)
        .def_property_readonly("increments", [](const NoisePath& p) { return p.dI; });

    py::class_<FilterPath>(m, "FilterPath")
        .def_property_readonly("times", [](const FilterPath& p) { return p.times; })
        .def_property_readonly("solver", [](const FilterPath& p) { return p.solver_tag; })
        .def_property_readonly("seed", [](const FilterPath& p) { return p.seed; })
        .def_property_readonly("diagnostics", [](const FilterPath& p) { return diag_dict(p.diag); })
        .def("snapshot", [](const FilterPath& p, int k) { return p.snapshots.at(k); })
        .def_property_readonly("terminal", [](const FilterPath& p) { return p.terminal(); })
        .def("__len__", [](const FilterPath& p) { return p.snapshots.size(); })
        .def("to_json", [](const FilterPath& p) { return to_json(p); });

    m.def(
        "solve_ks_grid",
        [](const GridMeasure& mu0, double t0, const OperatorSet& ops, const NoisePath& noise,
           bool enforce_stability) {
            KsGridConfig cfg;
            cfg.enforce_stability = enforce_stability;
            return solve_ks_grid(mu0, t0, ops, noise, cfg);
        },
        py::arg("mu0"), py::arg("t0"), py::arg("ops"), py::arg("noise"),
        py::arg("enforce_stability") = true);
    m.def(
        "solve_particle_filter",
        [](const GridMeasure& mu0, double t0, const Coefficients& coeffs,
           std::shared_ptr<DomainGrid> grid, std::uint64_t seed, int count, double dt,
           double ess_threshold, double T) {
            ParticleConfig cfg;
            cfg.count = count;
            cfg.dt = dt;
            cfg.ess_threshold = ess_threshold;
            return solve_particle_filter(mu0, t0, coeffs, grid, seed, cfg, T);
        },
        py::arg("mu0"), py::arg("t0"), py::arg("coeffs"), py::arg("grid"), py::arg("seed"),
        py::arg("particles"), py::arg("dt"), py::arg("ess_threshold"), py::arg("T"));
    m.def(
        "evolve_fokker_planck",
        [](const OperatorSet& ops, const GridMeasure& mu0, double time, int steps) {
            return evolve_fokker_planck(ops, mu0, time, steps);
        },
        py::arg("ops"), py::arg("mu0"), py::arg("time"), py::arg("steps") = 1000);

    m.def(
        "dynkin_residual",
        [](const OperatorSet& ops, const std::vector<double>& phi, const GridMeasure& mu0,
           double t, int paths, double fine_dt, int coarsen, std::uint64_t seed,
           bool control_variate) {
            DynkinOptions opts;
            opts.paths = paths;
            opts.fine_dt = fine_dt;
            opts.coarsen = coarsen;
            opts.seed = seed;
            opts.control_variate = control_variate;
            auto res = dynkin_residual(ops, phi, mu0, t, opts);
            py::dict out;
            out["residual"] = res.residual;
            out["std_error"] = res.std_error;
            out["paths"] = res.paths;
            out["dt"] = res.dt;
            return out;
        },
        py::arg("ops"), py::arg("phi"), py::arg("mu0"), py::arg("t"), py::arg("paths") = 200,
        py::arg("fine_dt") = 1e-3, py::arg("coarsen") = 1, py::arg("seed") = 1,
        py::arg("control_variate") = true);
    m.def(
        "ito_residual",
        [](const OperatorSet& ops, const CylinderFunctional& u, const FilterPath& path,
           const NoisePath& noise, bool realized_qv) {
            return ito_residual(ops, u, path, noise,
                                realized_qv ? QvMode::realized : QvMode::expected);
        },
        py::arg("ops"), py::arg("u"), py::arg("path"), py::arg("noise"),
        py::arg("realized_qv") = true);

    m.def("generator_apply", [](const OperatorSet& ops, const CylinderFunctional& f,
                                const GridMeasure& mu) {
        return breakdown_dict(generator_apply(ops, f, mu));
    });

    py::class_<TerminalFunctional>(m, "TerminalFunctional")
        .def("__call__", [](const TerminalFunctional& f, const GridMeasure& mu) { return f(mu); })
        .def_property_readonly("label", &TerminalFunctional::label)
        .def_property_readonly("is_cylinder", &TerminalFunctional::is_cylinder);
    m.def(
        "terminal_cylinder",
        [](const CylinderFunctional& f, std::optional<double> bound) {
            return TerminalFunctional::cylinder(f, bound);
        },
        py::arg("f"), py::arg("sup_bound") = std::nullopt);
    m.def(
        "terminal_generic",
        [](std::function<double(const GridMeasure&)> f, const std::string& label,
           std::optional<double> bound) {
            return TerminalFunctional::generic(std::move(f), label, bound);
        },
        py::arg("f"), py::arg("label") = "generic", py::arg("sup_bound") = std::nullopt);

    py::class_<KolmogorovEstimate>(m, "KolmogorovEstimate")
        .def_property_readonly("value", [](const KolmogorovEstimate& e) { return e.value; })
        .def_property_readonly("std_error",
                               [](const KolmogorovEstimate& e) { return e.std_error; })
        .def_property_readonly("paths", [](const KolmogorovEstimate& e) { return e.paths; })
        .def_property_readonly("diagnostics",
                               [](const KolmogorovEstimate& e) { return diag_dict(e.diag); });
    // python-backed terminal functionals run on the calling thread only
    m.def(
        "solve_u",
        [](const TerminalFunctional& phi, const GridMeasure& mu, double t, double T,
           const OperatorSet& ops, const Coefficients& coeffs, std::uint64_t seed, int paths,
           double dt, const std::string& solver, int particles) {
            SolveUConfig cfg;
            cfg.paths = paths;
            cfg.dt = dt;
            cfg.solver = solver;
            cfg.particles = particles;
            cfg.workers = 1;
            return solve_u(phi, mu, t, T, ops, coeffs, seed, cfg);
        },
        py::arg("phi"), py::arg("mu"), py::arg("t"), py::arg("T"), py::arg("ops"),
        py::arg("coeffs"), py::arg("seed"), py::arg("paths") = 200, py::arg("dt") = 1e-3,
        py::arg("solver") = "ks-grid", py::arg("particles") = 2000);
    m.def(
        "terminal_ensemble",
        [](const GridMeasure& mu, double t, double T, const OperatorSet& ops,
           const Coefficients& coeffs, std::uint64_t seed, int paths, double dt) {
            SolveUConfig cfg;
            cfg.paths = paths;
            cfg.dt = dt;
            cfg.workers = 1;
            return terminal_ensemble(mu, t, T, ops, coeffs, seed, cfg);
        },
        py::arg("mu"), py::arg("t"), py::arg("T"), py::arg("ops"), py::arg("coeffs"),
        py::arg("seed"), py::arg("paths") = 200, py::arg("dt") = 1e-3);
    m.def(
        "signal_semigroup",
        [](const OperatorSet& ops, const std::vector<double>& phi, double horizon, int steps) {
            return signal_semigroup(ops, phi, horizon, steps);
        },
        py::arg("ops"), py::arg("phi"), py::arg("horizon"), py::arg("steps") = 1000);

    py::class_<SpaceTimePoint>(m, "SpaceTimePoint")
        .def(py::init([](GridMeasure mu, double t) { return SpaceTimePoint{std::move(mu), t}; }),
             py::arg("mu"), py::arg("t"))
        .def_property_readonly("t", [](const SpaceTimePoint& z) { return z.t; })
        .def_property_readonly("mu", [](const SpaceTimePoint& z) { return z.mu; });

    py::class_<GaugeFunction>(m, "GaugeFunction")
        .def(py::init<MetricFamily>())
        .def("__call__", [](const GaugeFunction& rho, const SpaceTimePoint& a,
                            const SpaceTimePoint& b) { return rho(a, b); });

    py::class_<BpResult>(m, "BpResult")
        .def_property_readonly("limit_index", [](const BpResult& r) { return r.limit_index; })
        .def_property_readonly("center_indices",
                               [](const BpResult& r) { return r.center_indices; })
        .def_property_readonly("stages", [](const BpResult& r) { return r.stages; })
        .def_property_readonly("certificates", [](const BpResult& r) {
            py::dict out;
            out["rho_values"] = r.certificates.rho_values;
            out["rho_limits"] = r.certificates.rho_limits;
            out["rho_bounds_pass"] = r.certificates.rho_bounds_pass;
            out["domination_lhs"] = r.certificates.dom_lhs;
            out["domination_rhs"] = r.certificates.dom_rhs;
            out["domination_pass"] = r.certificates.domination_pass;
            out["max_maximality_violation"] = r.certificates.max_maximality_violation;
            out["maximality_pass"] = r.certificates.maximality_pass;
            out["all_pass"] = r.certificates.all_pass();
            return out;
        });
    m.def(
        "bp_search",
        [](const std::vector<SpaceTimePoint>& points, const std::vector<double>& values,
           const GaugeFunction& rho, double delta, double eps, int start) {
            SampledObjective obj;
            obj.points = points;
            obj.values = values;
            obj.provenance = "python";
            return bp_search(obj, rho, delta, eps, start);
        },
        py::arg("points"), py::arg("values"), py::arg("gauge"), py::arg("delta"), py::arg("eps"),
        py::arg("start"));

    m.def("d2sq_functional", &d2sq_functional, py::arg("family"), py::arg("mu0"));

    py::class_<PolynomialFunctional>(m, "PolynomialFunctional")
        .def("value", &PolynomialFunctional::value)
        .def_property_readonly("degree", &PolynomialFunctional::degree)
        .def_property_readonly("coeffs",
                               [](const PolynomialFunctional& p) { return p.coeffs(); })
        .def("to_cylinder", &PolynomialFunctional::to_cylinder);
    m.def(
        "poly_fit",
        [](const TerminalFunctional& phi, int degree, const std::vector<GridMeasure>& train,
           const std::vector<GridMeasure>& heldout) {
            auto fit = poly_fit(phi, degree, train, heldout);
            py::dict rep;
            rep["degree"] = fit.report.degree;
            rep["n_features"] = fit.report.n_features;
            rep["rank"] = fit.report.rank;
            rep["rank_deficient"] = fit.report.rank_deficient;
            rep["training_sup_error"] = fit.report.training_sup_error;
            rep["training_rms_error"] = fit.report.training_rms_error;
            rep["heldout_sup_error"] = fit.report.heldout_sup_error;
            return py::make_tuple(fit.fit, rep);
        },
        py::arg("phi"), py::arg("degree"), py::arg("train"),
        py::arg("heldout") = std::vector<GridMeasure>{});

    m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("stream"), py::arg("index") = 0);
}
