#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ensembles/analysis.hpp"
#include "ensembles/cli_io.hpp"

namespace py = pybind11;
using namespace ensembles;

namespace {

Boundary make_boundary(const std::vector<int>& u, const std::optional<std::vector<int>>& v) {
  if (v) return BridgeBoundary{u, *v};
  return WalkBoundary{u};
}

EnsembleSpec make_spec(int n, int m_left, int n_right, const std::vector<int>& u,
                       const std::optional<std::vector<int>>& v, const TiltSpec& tilt, int x_max) {
  const Boundary b = make_boundary(u, v);
  return EnsembleSpec::make(n, m_left, n_right, b, x_max > 0 ? x_max : default_x_max(tilt, b));
}

// (count, n, length) array of heights
py::array_t<int> paths_array(const std::vector<PathConfig>& paths, const EnsembleSpec& spec) {
  py::array_t<int> out({paths.size(), static_cast<std::size_t>(spec.n()),
                        static_cast<std::size_t>(spec.length())});
  auto r = out.mutable_unchecked<3>();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (int c = 0; c < spec.n(); ++c) {
      for (int t = spec.m_left(); t <= spec.n_right(); ++t) r(i, c, t - spec.m_left()) = paths[i](c, t);
    }
  }
  return out;
}

// pmf of every curve, rows = curves
py::array_t<double> curve_pmfs(const Distribution& d, bool oracle) {
  const int n = d.space().n();
  std::vector<std::vector<double>> rows;
  for (int c = 0; c < n; ++c) rows.push_back(oracle ? oracle_coordinate_pmf(d, c) : d.coordinate_pmf(0, c));
  py::array_t<double> out({static_cast<std::size_t>(n), rows.front().size()});
  auto r = out.mutable_unchecked<2>();
  for (int c = 0; c < n; ++c) {
    for (std::size_t k = 0; k < rows[c].size(); ++k) r(c, k) = rows[c][k];
  }
  return out;
}

PolymerBoundary polymer_boundary(const std::string& kind, const std::vector<double>& u,
                                 const std::optional<std::vector<double>>& v) {
  if (kind == "zero") return PolymerBoundary::zero();
  if (kind == "fixed") return PolymerBoundary::fixed(u, v);
  if (kind == "free_right") return PolymerBoundary::free_right();
  if (kind == "free_both") return PolymerBoundary::free_both();
  throw Error(ErrorCode::InvalidArgument, "python", "unknown boundary kind '" + kind + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Area-tilted line ensembles: exact transfer engine, block Gibbs sampler, Brownian-polymer oracle";
  m.attr("__version__") = std::string(kVersion);

  static py::exception<Error> error(m, "EnsemblesError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      PyObject* value = PyObject_CallFunction(exc.ptr(), "s", e.what());
      PyObject_SetAttrString(value, "code", py::str(std::string(to_string(e.code()))).ptr());
      PyErr_SetObject(exc.ptr(), value);
      Py_DECREF(value);
    }
  });

  py::class_<Kernel>(m, "Kernel")
      .def(py::init(&Kernel::make), py::arg("offsets"), py::arg("probs"))
      .def_static("simple_walk", &Kernel::simple_walk)
      .def_static("lazy_walk", &Kernel::lazy_walk)
      .def_property_readonly("offsets", [](const Kernel& k) {
        return std::vector<int>(k.offsets().begin(), k.offsets().end());
      })
      .def_property_readonly("probs", [](const Kernel& k) {
        return std::vector<double>(k.probs().begin(), k.probs().end());
      })
      .def_property_readonly("variance", &Kernel::variance)
      .def_property_readonly("sigma", &Kernel::sigma)
      .def_property_readonly("period", &Kernel::period);

  py::class_<Potential>(m, "Potential")
      .def_static("linear", &Potential::linear, py::arg("lam"))
      .def_static("table", &Potential::table, py::arg("xs"), py::arg("values"), py::arg("lam"))
      .def_property_readonly("lam", &Potential::lambda)
      .def("__call__", &Potential::operator());

  py::class_<TiltSpec>(m, "TiltSpec")
      .def(py::init(&TiltSpec::make), py::arg("a"), py::arg("b"), py::arg("potential"))
      .def_property_readonly("a", &TiltSpec::a)
      .def_property_readonly("b", &TiltSpec::b)
      .def("site_cost", &TiltSpec::site_cost, py::arg("curve"), py::arg("x"));

  m.def("h_scale", [](const Potential& p) {
    const ScaleInfo s = h_scale(p);
    return py::make_tuple(s.h_big, s.h_small);
  }, py::arg("potential"), "(H, h) with H^2 V(H) = 1 and h = 1/H");

  py::class_<EnsembleSpec>(m, "EnsembleSpec")
      .def(py::init(&make_spec), py::arg("n"), py::arg("m_left"), py::arg("n_right"), py::arg("u"),
           py::arg("v") = py::none(), py::arg("tilt"), py::arg("x_max") = 0,
           "walk when v is None, bridge otherwise; x_max <= 0 picks the default cutoff")
      .def_property_readonly("n", &EnsembleSpec::n)
      .def_property_readonly("m_left", &EnsembleSpec::m_left)
      .def_property_readonly("n_right", &EnsembleSpec::n_right)
      .def_property_readonly("x_max", &EnsembleSpec::x_max)
      .def_property_readonly("is_bridge", &EnsembleSpec::is_bridge);

  py::class_<ExactEngine>(m, "ExactEngine")
      .def(py::init([](const EnsembleSpec& s, const Kernel& k, const TiltSpec& t) {
             return ExactEngine(s, k, t);
           }),
           py::arg("spec"), py::arg("kernel"), py::arg("tilt"))
      .def_property_readonly("log_z", &ExactEngine::log_z)
      .def_property_readonly("warnings", [](const ExactEngine& e) { return e.result().warnings; })
      .def("marginal", [](const ExactEngine& e, int t) { return curve_pmfs(e.marginal(t), false); },
           py::arg("t"), "pmf over heights 0..x_max, one row per curve")
      .def("sample", [](const ExactEngine& e, std::uint64_t seed, std::size_t count, int threads) {
             std::vector<PathConfig> paths;
             {
               py::gil_scoped_release release;
               paths = e.sample(seed, count, threads);
             }
             return paths_array(paths, e.spec());
           },
           py::arg("seed"), py::arg("count"), py::arg("threads") = 1);

  py::class_<McmcParams>(m, "McmcParams")
      .def(py::init<>())
      .def_readwrite("block_len", &McmcParams::block_len)
      .def_readwrite("overlap", &McmcParams::overlap)
      .def_readwrite("sweeps", &McmcParams::sweeps)
      .def_readwrite("burn_in", &McmcParams::burn_in)
      .def_readwrite("thin", &McmcParams::thin)
      .def_readwrite("seed", &McmcParams::seed)
      .def_readwrite("chains", &McmcParams::chains);

  m.def("sample_paths", [](const EnsembleSpec& spec, const Kernel& k, const TiltSpec& t,
                           const McmcParams& params, int threads) {
    const auto ptr = std::make_shared<const EnsembleSpec>(spec);
    std::pair<std::vector<PathConfig>, ChainDiagnostics> res;
    {
      py::gil_scoped_release release;
      res = sample_paths(ptr, k, t, params, threads);
    }
    py::dict diag;
    diag["tau_top"] = res.second.tau_top;
    diag["tau_area"] = res.second.tau_area;
    diag["samples"] = res.second.samples;
    diag["seconds_per_sweep"] = res.second.seconds_per_sweep;
    return py::make_tuple(paths_array(res.first, spec), diag);
  }, py::arg("spec"), py::arg("kernel"), py::arg("tilt"), py::arg("params"), py::arg("threads") = 1);

  m.def("mixing_curve", [](const Kernel& k, const TiltSpec& t, int t_lattice, std::vector<int> ks,
                           std::vector<int> u, std::vector<int> u_alt, bool bridge, int threads) {
    const BoundaryPair pair = bridge ? BoundaryPair{BridgeBoundary{u, u}, BridgeBoundary{u_alt, u_alt}}
                                     : BoundaryPair{WalkBoundary{u}, WalkBoundary{u_alt}};
    const int x_max = std::max(default_x_max(t, pair.first), default_x_max(t, pair.second));
    const EnsembleSpec base = EnsembleSpec::make(static_cast<int>(u.size()), -1, 1, pair.first, x_max);
    const MixingReport r = mixing_curve(base, k, t, t_lattice, std::move(ks), pair, threads);
    py::dict out;
    std::vector<int> kk;
    std::vector<double> tv;
    for (const auto& p : r.points) {
      kk.push_back(p.k);
      tv.push_back(p.tv);
    }
    out["k"] = kk;
    out["tv"] = tv;
    out["strictly_decreasing"] = r.strictly_decreasing;
    out["c2"] = r.fit ? py::object(py::float_(-r.fit->slope)) : py::object(py::none());
    out["r2"] = r.fit ? py::object(py::float_(r.fit->r2)) : py::object(py::none());
    return out;
  }, py::arg("kernel"), py::arg("tilt"), py::arg("t_lattice"), py::arg("ks"), py::arg("u"),
     py::arg("u_alt"), py::arg("bridge") = false, py::arg("threads") = 1,
     "exact tv between the central-window laws from two boundaries, for each K");

  m.def("polymer_marginal", [](int n, double a, double b, double dx, double cap, double half_width,
                               const std::string& kind, std::vector<double> u,
                               std::optional<std::vector<double>> v, double t) {
    const PolymerChamber chamber(n, a, b, GridSpec::make(dx, cap > 0 ? cap : GridSpec::default_cap(n, a), half_width));
    const bool free = kind == "free_right" || kind == "free_both";
    const Distribution d =
        free ? free_marginal(chamber, kind == "free_right" ? PolymerBoundary::Kind::FreeRight
                                                           : PolymerBoundary::Kind::FreeBoth, t)
             : polymer_marginal(chamber, polymer_boundary(kind, u, v), t);
    return curve_pmfs(d, true);
  }, py::arg("n"), py::arg("a"), py::arg("b"), py::arg("dx"), py::arg("cap") = 0.0,
     py::arg("half_width") = 1.0, py::arg("kind") = "zero", py::arg("u") = std::vector<double>{},
     py::arg("v") = py::none(), py::arg("t") = 0.0,
     "one-time marginal of the Brownian polymer; rows are curves, column k is height k dx");

  m.def("stationary_density", [](int n, double a, double b, double dx, double cap) {
    const PolymerChamber chamber(n, a, b, GridSpec::make(dx, cap > 0 ? cap : GridSpec::default_cap(n, a), 1.0));
    const StationaryResult r = stationary_density(chamber);
    return py::make_tuple(curve_pmfs(r.density, true), r.eigenvalue);
  }, py::arg("n"), py::arg("a"), py::arg("b"), py::arg("dx"), py::arg("cap") = 0.0);

  m.def("content_hash", [](const std::string& text) { return content_hash(text); });
  m.def("canonical_config", [](const std::string& text) { return canonical_config(parse_config(text)); });

  m.def("run_experiment", [](const std::string& config_text, std::optional<std::string> experiment,
                             std::optional<std::string> out_dir) {
    RunConfig config = parse_config(config_text, experiment);
    RunOutcome outcome;
    {
      py::gil_scoped_release release;
      outcome = execute(config);
    }
    if (out_dir) write_outputs(outcome, *out_dir);
    py::dict csv;
    for (const auto& t : outcome.tables) csv[py::str(t.name)] = emit_csv(t);
    py::dict out;
    out["results_json"] = outcome.results_json;
    out["csv"] = csv;
    out["exit_code"] = outcome.exit_code;
    return out;
  }, py::arg("config_text"), py::arg("experiment") = py::none(), py::arg("out_dir") = py::none(),
     "runs one experiment from config text; returns results.json text, CSV texts and the exit code");
}
