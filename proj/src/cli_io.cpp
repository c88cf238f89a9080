#include "ensembles/cli_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace ensembles {

namespace {

constexpr const char* kModule = "cli_io";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

using Json = nlohmann::ordered_json;

// Sorted by key.
const std::vector<KeySpec> kKeys = {
    {"blocks.eps", KeyType::Real, "0.5", "gap threshold of the regular set"},
    {"blocks.eta", KeyType::Real, "3", "height threshold of the regular set"},
    {"blocks.m", KeyType::IntList, "1,2,3,4,5,6", "block window half-widths M"},
    {"boundary.kind", KeyType::String, "walk", "walk | bridge"},
    {"boundary.u", KeyType::IntList, "", "lattice left boundary (default n..1)"},
    {"boundary.u_alt", KeyType::IntList, "", "second left boundary (default u + 2)"},
    {"boundary.u_cont", KeyType::RealList, "", "continuum boundary (default n..1)"},
    {"boundary.v", KeyType::IntList, "", "lattice right boundary for bridges (default u)"},
    {"boundary.v_alt", KeyType::IntList, "", "second right boundary (default u_alt)"},
    {"converge.n_rule", KeyType::String, "round", "round | ceil: lattice half-width from 1/lambda"},
    {"dominance.shift", KeyType::Real, "1", "raise of the upper oracle boundary"},
    {"engine.x_max", KeyType::Int, "0", "height cutoff (0: automatic)"},
    {"exact.samples", KeyType::Int, "0", "number of exact samples to emit"},
    {"exact.times", KeyType::IntList, "0", "times of the emitted marginals"},
    {"grid.cap", KeyType::Real, "0", "oracle height cap (0: automatic)"},
    {"grid.dx", KeyType::Real, "0.05", "oracle space step"},
    {"grid.m", KeyType::Real, "2", "oracle time half-width"},
    {"invariance.m_cont", KeyType::Real, "1", "continuum half-width M"},
    {"invariance.match_boundary", KeyType::Int, "1", "oracle starts at the rescaled lattice boundary"},
    {"invariance.t", KeyType::Real, "0", "observation time"},
    {"kernel.offsets", KeyType::IntList, "-1,0,1", "step values"},
    {"kernel.probs", KeyType::RealList, "0.25,0.5,0.25", "step probabilities"},
    {"mcmc.block_len", KeyType::Int, "8", ""},
    {"mcmc.burn_in", KeyType::Int, "100", ""},
    {"mcmc.chains", KeyType::Int, "1", ""},
    {"mcmc.overlap", KeyType::Int, "4", ""},
    {"mcmc.sweeps", KeyType::Int, "1000", ""},
    {"mcmc.thin", KeyType::Int, "1", ""},
    {"mixing.k", KeyType::IntList, "1,2,3,4,5,6", "distances K"},
    {"mixing.t_lattice", KeyType::Int, "1", "central window half-width"},
    {"model.a", KeyType::Real, "1", "tilt prefactor a"},
    {"model.b", KeyType::Real, "2", "geometric growth b"},
    {"model.lambda", KeyType::Real, "0.3", ""},
    {"model.lambdas", KeyType::RealList, "0.4,0.2,0.1", "lambda sequence"},
    {"model.n", KeyType::Int, "1", "number of curves"},
    {"model.potential", KeyType::String, "linear", "linear | table"},
    {"model.potential.v", KeyType::RealList, "", "table values g(x), V = lambda g"},
    {"model.potential.x", KeyType::RealList, "", "table abscissae"},
    {"oracle.kind", KeyType::String, "zero", "zero | fixed | free_right | free_both"},
    {"oracle.t", KeyType::Real, "0", "oracle observation time"},
    {"output.dir", KeyType::String, "out", "output directory"},
    {"seed", KeyType::UInt, "0", "64-bit seed"},
    {"slope.eta", KeyType::Real, "2", "bound on the rescaled w_1"},
    {"slope.t", KeyType::RealList, "1,2,4,8,16", "half-widths T"},
    {"threads", KeyType::Int, "1", "worker threads"},
    {"window.m", KeyType::Int, "-10", "left end of the lattice window"},
    {"window.n", KeyType::Int, "10", "right end of the lattice window"},
};

const std::map<std::string_view, std::vector<std::string_view>> kChoices = {
    {"boundary.kind", {"walk", "bridge"}},
    {"converge.n_rule", {"round", "ceil"}},
    {"model.potential", {"linear", "table"}},
    {"oracle.kind", {"zero", "fixed", "free_right", "free_both"}},
};

const KeySpec* key_spec(std::string_view key) {
  auto it = std::lower_bound(kKeys.begin(), kKeys.end(), key,
                             [](const KeySpec& s, std::string_view k) { return s.key < k; });
  return it != kKeys.end() && it->key == key ? &*it : nullptr;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::TypeError, "key '" + std::string(key) + "': cannot parse '" +
                                   std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      fail(ErrorCode::TypeError, "key '" + std::string(key) + "': value must be finite");
    }
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = text.find(',', start);
    out.push_back(parse_number<T>(key, text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

ConfigValue parse_value(const KeySpec& spec, std::string_view text) {
  switch (spec.type) {
    case KeyType::Int: return parse_number<std::int64_t>(spec.key, text);
    case KeyType::UInt: return parse_number<std::uint64_t>(spec.key, text);
    case KeyType::Real: return parse_number<double>(spec.key, text);
    case KeyType::IntList: return parse_list<std::int64_t>(spec.key, text);
    case KeyType::RealList: return parse_list<double>(spec.key, text);
    case KeyType::String: {
      const std::string s(trim(text));
      if (auto it = kChoices.find(spec.key); it != kChoices.end()) {
        if (std::find(it->second.begin(), it->second.end(), s) == it->second.end()) {
          fail(ErrorCode::TypeError, "key '" + std::string(spec.key) + "': '" + s +
                                         "' is not an accepted value");
        }
      }
      return s;
    }
  }
  fail(ErrorCode::TypeError, "unknown key type");
}

// Shortest text that reads back to the same double.
std::string config_real(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string value_text(const ConfigValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, double>) {
          return config_real(x);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string s;
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + config_real(x[i]);
          return s;
        } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
          std::string s;
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
          return s;
        } else {
          return std::to_string(x);
        }
      },
      v);
}

std::vector<int> to_ints(const std::vector<std::int64_t>& v) {
  return {v.begin(), v.end()};
}

Json json_real(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json json_opt(const std::optional<double>& x) { return x ? json_real(*x) : Json(nullptr); }

bool weakly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

struct ExperimentResult {
  Json payload = Json::object();
  std::vector<CsvTable> tables;
  std::optional<bool> pass;  // set for PASS/FAIL experiments
  Json timings = Json::object();
};

// ---- experiments ----

ExperimentResult run_exact(const RunConfig& c) {
  const double lambda = c.get_real("model.lambda");
  const ExactEngine engine(c.ensemble(lambda), c.kernel(), c.tilt(lambda));
  ExperimentResult r;
  r.payload["log_z"] = json_real(engine.log_z());
  r.payload["states"] = engine.step().size();
  r.payload["x_max"] = engine.spec().x_max();
  r.payload["warnings"] = engine.result().warnings;

  CsvTable marg{"marginals", {"t", "curve", "height", "prob"}, {}};
  for (auto t : c.get_ints("exact.times")) {
    const Distribution d = engine.marginal(static_cast<int>(t));
    for (int curve = 0; curve < engine.spec().n(); ++curve) {
      const auto pmf = d.coordinate_pmf(0, curve);
      for (std::size_t h = 0; h < pmf.size(); ++h) {
        if (pmf[h] > 0.0) marg.rows.push_back({t, std::int64_t(curve), std::int64_t(h), pmf[h]});
      }
    }
  }
  r.tables.push_back(std::move(marg));

  const auto count = c.get_int("exact.samples");
  if (count > 0) {
    const auto samples = engine.sample(c.seed(), static_cast<std::size_t>(count), c.threads());
    CsvTable tab{"samples", {"sample", "t", "curve", "height"}, {}};
    const auto& s = engine.spec();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (int t = s.m_left(); t <= s.n_right(); ++t) {
        for (int curve = 0; curve < s.n(); ++curve) {
          tab.rows.push_back({std::int64_t(i), std::int64_t(t), std::int64_t(curve),
                              std::int64_t(samples[i](curve, t))});
        }
      }
    }
    r.tables.push_back(std::move(tab));
  }
  return r;
}

ExperimentResult run_sample(const RunConfig& c) {
  const double lambda = c.get_real("model.lambda");
  const auto spec = std::make_shared<const EnsembleSpec>(c.ensemble(lambda));
  const TiltSpec tilt = c.tilt(lambda);
  const auto [paths, diag] = sample_paths(spec, c.kernel(), tilt, c.mcmc(), c.threads());
  ExperimentResult r;
  r.payload["samples"] = diag.samples;
  r.payload["tau_top"] = json_opt(diag.tau_top);
  r.payload["tau_area"] = json_opt(diag.tau_area);
  r.payload["acceptance"] = diag.acceptance;
  bool boundary_ok = true;
  for (const auto& p : paths) {
    boundary_ok = boundary_ok && p.column(spec->m_left()) == spec->u();
    if (spec->v()) boundary_ok = boundary_ok && p.column(spec->n_right()) == *spec->v();
  }
  r.payload["boundary_ok"] = boundary_ok;
  r.timings["seconds_per_sweep"] = diag.seconds_per_sweep;

  std::vector<double> counts(static_cast<std::size_t>(spec->x_max()) + 1, 0.0);
  CsvTable trace{"trace", {"sample", "top_center", "area"}, {}};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const double top = top_at_center(paths[i]);
    counts[static_cast<std::size_t>(top)] += 1.0;
    trace.rows.push_back({std::int64_t(i), top, area_functional(paths[i], tilt)});
  }
  CsvTable marg{"center_marginal", {"height", "prob"}, {}};
  for (std::size_t h = 0; h < counts.size(); ++h) {
    if (counts[h] > 0.0) marg.rows.push_back({std::int64_t(h), counts[h] / paths.size()});
  }
  r.tables.push_back(std::move(marg));
  r.tables.push_back(std::move(trace));
  return r;
}

ExperimentResult run_mixing(const RunConfig& c) {
  const double lambda = c.get_real("model.lambda");
  const TiltSpec tilt = c.tilt(lambda);
  BoundaryPair pair{WalkBoundary{c.boundary_u()}, WalkBoundary{c.boundary_u_alt()}};
  if (c.get_string("boundary.kind") == "bridge") {
    std::vector<int> v_alt = c.boundary_u_alt();
    if (c.has("boundary.v_alt")) v_alt = to_ints(c.get_ints("boundary.v_alt"));
    pair = {BridgeBoundary{c.boundary_u(), c.boundary_v()},
            BridgeBoundary{c.boundary_u_alt(), v_alt}};
  }
  int x_max = static_cast<int>(c.get_int("engine.x_max"));
  if (x_max <= 0) x_max = std::max(default_x_max(tilt, pair.first), default_x_max(tilt, pair.second));
  const EnsembleSpec base =
      EnsembleSpec::make(static_cast<int>(c.get_int("model.n")), -1, 1, pair.first, x_max);
  std::vector<int> ks = to_ints(c.get_ints("mixing.k"));
  const MixingReport rep = mixing_curve(base, c.kernel(), tilt,
                                        static_cast<int>(c.get_int("mixing.t_lattice")), ks, pair,
                                        c.threads());
  ExperimentResult r;
  r.payload["bridge"] = rep.bridge;
  r.payload["t_lattice"] = rep.t_lattice;
  r.payload["strictly_decreasing"] = rep.strictly_decreasing;
  r.payload["monotonicity_violated"] = rep.monotonicity_violated;
  if (rep.fit) {
    r.payload["c2"] = -rep.fit->slope;
    r.payload["log_c1"] = rep.fit->intercept;
    r.payload["r2"] = rep.fit->r2;
    r.payload["fit_points"] = rep.fit->points;
  } else {
    r.payload["c2"] = nullptr;
  }
  r.tables.push_back(to_csv(rep));
  r.pass = !rep.monotonicity_violated;
  return r;
}

ExperimentResult run_invariance(const RunConfig& c) {
  InvarianceSetup s;
  s.n = static_cast<int>(c.get_int("model.n"));
  s.m_cont = c.get_real("invariance.m_cont");
  s.t_obs = c.get_real("invariance.t");
  s.a = c.get_real("model.a");
  s.b = c.get_real("model.b");
  s.u = c.boundary_u_cont();
  if (c.get_string("boundary.kind") == "bridge") s.v = s.u;
  s.dx = c.get_real("grid.dx");
  s.height_cap = c.get_real("grid.cap");
  s.match_lattice_boundary = c.get_int("invariance.match_boundary") != 0;
  const auto pts = invariance_check(s, c.get_reals("model.lambdas"), c.kernel(), c.threads());
  ExperimentResult r;
  CsvTable tab{"invariance", {"lambda", "half_width", "u1_lattice", "distance"}, {}};
  std::vector<double> d;
  for (const auto& p : pts) {
    tab.rows.push_back({p.lambda, std::int64_t(p.half_width), std::int64_t(p.u_lattice.front()),
                        p.distance});
    d.push_back(p.distance);
  }
  r.payload["weakly_decreasing"] = weakly_decreasing(d);
  r.payload["final_distance"] = d.empty() ? Json(nullptr) : json_real(d.back());
  r.tables.push_back(std::move(tab));
  return r;
}

ExperimentResult run_converge(const RunConfig& c) {
  const auto lambdas = c.get_reals("model.lambdas");
  ExperimentResult r;
  CsvTable tab{"converge", {"mode", "lambda", "half_width", "tv", "exact"}, {}};
  std::map<std::string, std::vector<double>> curves;
  for (const auto mode : {BoundaryMode::Walk, BoundaryMode::Bridge}) {
    ConvergenceSetup s;
    s.n = static_cast<int>(c.get_int("model.n"));
    s.a = c.get_real("model.a");
    s.b = c.get_real("model.b");
    s.mode = mode;
    s.u = c.boundary_u();
    if (c.get_string("converge.n_rule") == "ceil") s.n_rule = inverse_lambda_ceil_rule;
    s.dx = c.get_real("grid.dx");
    s.height_cap = c.get_real("grid.cap");
    s.mcmc = c.mcmc();
    const std::string name = mode == BoundaryMode::Walk ? "walk" : "bridge";
    for (const auto& p : convergence_to_mu(s, lambdas, c.kernel(), c.threads())) {
      tab.rows.push_back({name, p.lambda, std::int64_t(p.half_width), p.tv, std::int64_t(p.exact)});
      curves[name].push_back(p.tv);
    }
  }
  r.payload["walk_weakly_decreasing"] = weakly_decreasing(curves["walk"]);
  r.payload["bridge_weakly_decreasing"] = weakly_decreasing(curves["bridge"]);
  if (!lambdas.empty()) {
    r.payload["final_gap"] = std::abs(curves["walk"].back() - curves["bridge"].back());
  }
  r.tables.push_back(std::move(tab));
  return r;
}

ExperimentResult run_dominance(const RunConfig& c) {
  const int n = static_cast<int>(c.get_int("model.n"));
  const GridSpec grid = c.grid();
  const PolymerChamber chamber(n, c.get_real("model.a"), c.get_real("model.b"), grid);
  const double dx = grid.dx;
  ExperimentResult r;
  CsvTable tab{"dominance", {"check", "curve", "gating", "pass", "max_violation", "max_gap"}, {}};
  bool all = true;
  const auto record = [&](const std::string& name, bool gating, const Distribution& lo,
                          const Distribution& hi, int curve, double unit) {
    const DominanceReport d = dominance_check(lattice_marginal(lo, curve, unit),
                                              lattice_marginal(hi, curve, unit));
    if (gating) all = all && d.pass;
    tab.rows.push_back({name, std::int64_t(curve), std::int64_t(gating), std::int64_t(d.pass),
                        d.max_violation, d.max_gap});
  };
  const std::vector<double> u = c.boundary_u_cont();
  std::vector<double> raised = u;
  for (double& x : raised) x += c.get_real("dominance.shift");
  const Distribution low = polymer_marginal(chamber, PolymerBoundary::fixed(u), 0.0);
  const Distribution high = polymer_marginal(chamber, PolymerBoundary::fixed(raised), 0.0);
  const Distribution zero = polymer_marginal(chamber, PolymerBoundary::zero(), 0.0);
  const Distribution free_right = free_marginal(chamber, PolymerBoundary::Kind::FreeRight, 0.0);
  const Distribution free_both = free_marginal(chamber, PolymerBoundary::Kind::FreeBoth, 0.0);
  for (int curve = 0; curve < n; ++curve) {
    record("oracle_monotone", true, low, high, curve, dx);
    record("oracle_zero_vs_free_right", true, zero, free_right, curve, dx);
    record("oracle_free_right_vs_free_both", true, free_right, free_both, curve, dx);
  }
  // lattice walks (exploratory): Walk(u) vs Walk(u_alt) at the window center
  const double lambda = c.get_real("model.lambda");
  const TiltSpec tilt = c.tilt(lambda);
  const EnsembleSpec spec = c.ensemble(lambda);
  const Boundary alt = WalkBoundary{c.boundary_u_alt()};
  const int x_max = std::max(spec.x_max(), default_x_max(tilt, alt));
  const EnsembleSpec lo_spec = spec.with_x_max(x_max).with_boundary(WalkBoundary{c.boundary_u()});
  const EnsembleSpec hi_spec = lo_spec.with_boundary(alt);
  const int center = spec.m_left() + spec.steps() / 2;
  const Distribution walk_lo = ExactEngine(lo_spec, c.kernel(), tilt).marginal(center);
  const Distribution walk_hi = ExactEngine(hi_spec, c.kernel(), tilt).marginal(center);
  for (int curve = 0; curve < n; ++curve) record("walk_monotone", false, walk_lo, walk_hi, curve, 1.0);
  r.payload["oracle_pass"] = all;
  r.tables.push_back(std::move(tab));
  r.pass = all;
  return r;
}

ExperimentResult run_blocks(const RunConfig& c) {
  const double lambda = c.get_real("model.lambda");
  const auto spec = std::make_shared<const EnsembleSpec>(c.ensemble(lambda));
  const BlockStatistics st = good_block_statistics(
      spec, c.kernel(), c.tilt(lambda), c.mcmc(), c.get_real("blocks.eta"),
      c.get_real("blocks.eps"), to_ints(c.get_ints("blocks.m")), c.threads());
  ExperimentResult r;
  r.payload["nu"] = st.nu;
  r.payload["pairs"] = st.pairs;
  r.payload["decreasing"] = st.decreasing;
  CsvTable tab{"blocks", {"M", "mean_density", "prob_below"}, {}};
  for (const auto& p : st.points) tab.rows.push_back({std::int64_t(p.m), p.mean_density, p.prob_below});
  r.tables.push_back(std::move(tab));
  return r;
}

ExperimentResult run_slope(const RunConfig& c) {
  const double lambda = c.get_real("model.lambda");
  const SlopeReport s = log_partition_slope(
      c.boundary_u(), c.kernel(), c.tilt(lambda), c.get_reals("slope.t"),
      c.get_real("slope.eta"), static_cast<int>(c.get_int("engine.x_max")), c.threads());
  ExperimentResult r;
  r.payload["slope"] = json_real(s.slope);
  r.payload["intercept"] = json_real(s.intercept);
  Json local = Json::array();
  for (double x : s.local_slopes) local.push_back(json_real(x));
  r.payload["local_slopes"] = local;
  r.payload["max_slope_change"] = json_real(s.max_slope_change);
  r.payload["stable"] = s.stable;
  CsvTable tab{"slope", {"T", "steps", "log_z"}, {}};
  for (const auto& p : s.points) tab.rows.push_back({p.t, std::int64_t(p.steps), p.log_z});
  r.tables.push_back(std::move(tab));
  r.pass = s.pass;
  return r;
}

ExperimentResult run_oracle(const RunConfig& c) {
  const int n = static_cast<int>(c.get_int("model.n"));
  const GridSpec grid = c.grid();
  const PolymerChamber chamber(n, c.get_real("model.a"), c.get_real("model.b"), grid);
  const std::string kind = c.get_string("oracle.kind");
  const double t = c.get_real("oracle.t");
  const Distribution law = [&] {
    if (kind == "zero") return polymer_marginal(chamber, PolymerBoundary::zero(), t);
    if (kind == "free_right") return free_marginal(chamber, PolymerBoundary::Kind::FreeRight, t);
    if (kind == "free_both") return free_marginal(chamber, PolymerBoundary::Kind::FreeBoth, t);
    std::optional<std::vector<double>> v;
    if (c.get_string("boundary.kind") == "bridge") v = c.boundary_u_cont();
    return polymer_marginal(chamber, PolymerBoundary::fixed(c.boundary_u_cont(), v), t);
  }();
  const StationaryResult st = stationary_density(chamber);
  ExperimentResult r;
  r.payload["eigenvalue"] = st.eigenvalue;
  r.payload["iterations"] = st.iterations;
  r.payload["box_size"] = chamber.box_size();
  const auto table = [&](const std::string& name, const Distribution& d) {
    CsvTable tab{name, {"curve", "height", "prob"}, {}};
    for (int curve = 0; curve < n; ++curve) {
      const auto pmf = oracle_coordinate_pmf(d, curve);
      for (std::size_t k = 0; k < pmf.size(); ++k) {
        if (pmf[k] > 0.0) tab.rows.push_back({std::int64_t(curve), k * grid.dx, pmf[k]});
      }
    }
    return tab;
  };
  double mean = 0.0;
  for (const auto& [k, p] : [&] {
         std::vector<std::pair<std::size_t, double>> v;
         const auto pmf = oracle_coordinate_pmf(st.density, 0);
         for (std::size_t k = 0; k < pmf.size(); ++k) v.emplace_back(k, pmf[k]);
         return v;
       }()) {
    mean += k * grid.dx * p;
  }
  r.payload["stationary_top_mean"] = mean;
  r.tables.push_back(table("oracle", law));
  r.tables.push_back(table("stationary", st.density));
  return r;
}

}  // namespace

const std::vector<KeySpec>& config_keys() { return kKeys; }

// ---- RunConfig ----

void RunConfig::set_experiment(std::string name) {
  if (std::find(std::begin(kExperiments), std::end(kExperiments), name) == std::end(kExperiments)) {
    fail(ErrorCode::TypeError, "key 'experiment': '" + name + "' is not an experiment");
  }
  experiment_ = std::move(name);
}

void RunConfig::set(std::string_view key, std::string_view text) {
  if (key == "experiment") {
    set_experiment(std::string(trim(text)));
    return;
  }
  const KeySpec* spec = key_spec(key);
  if (!spec) fail(ErrorCode::UnknownKey, "unknown key '" + std::string(key) + "'");
  values_[std::string(key)] = parse_value(*spec, text);
}

const ConfigValue* RunConfig::find(std::string_view key) const {
  auto it = values_.find(std::string(key));
  return it == values_.end() ? nullptr : &it->second;
}

ConfigValue RunConfig::lookup(std::string_view key, KeyType type) const {
  const KeySpec* spec = key_spec(key);
  if (!spec) fail(ErrorCode::UnknownKey, "unknown key '" + std::string(key) + "'");
  if (spec->type != type) fail(ErrorCode::TypeError, "key '" + std::string(key) + "' read with the wrong type");
  if (const ConfigValue* v = find(key)) return *v;
  return parse_value(*spec, spec->fallback);
}

std::int64_t RunConfig::get_int(std::string_view key) const {
  return std::get<std::int64_t>(lookup(key, KeyType::Int));
}
std::uint64_t RunConfig::get_uint(std::string_view key) const {
  return std::get<std::uint64_t>(lookup(key, KeyType::UInt));
}
double RunConfig::get_real(std::string_view key) const {
  return std::get<double>(lookup(key, KeyType::Real));
}
std::string RunConfig::get_string(std::string_view key) const {
  return std::get<std::string>(lookup(key, KeyType::String));
}
std::vector<std::int64_t> RunConfig::get_ints(std::string_view key) const {
  return std::get<std::vector<std::int64_t>>(lookup(key, KeyType::IntList));
}
std::vector<double> RunConfig::get_reals(std::string_view key) const {
  return std::get<std::vector<double>>(lookup(key, KeyType::RealList));
}

Kernel RunConfig::kernel() const {
  return Kernel::make(to_ints(get_ints("kernel.offsets")), get_reals("kernel.probs"));
}

Potential RunConfig::potential(double lambda) const {
  if (get_string("model.potential") == "linear") return Potential::linear(lambda);
  if (!has("model.potential.x") || !has("model.potential.v")) {
    fail(ErrorCode::MissingRequired, "table potential needs model.potential.x and model.potential.v");
  }
  return Potential::table(get_reals("model.potential.x"), get_reals("model.potential.v"), lambda);
}

TiltSpec RunConfig::tilt(double lambda) const {
  return TiltSpec::make(get_real("model.a"), get_real("model.b"), potential(lambda));
}

std::vector<int> RunConfig::boundary_u() const {
  if (has("boundary.u")) return to_ints(get_ints("boundary.u"));
  std::vector<int> u;
  for (auto i = get_int("model.n"); i >= 1; --i) u.push_back(static_cast<int>(i));
  return u;
}

std::vector<int> RunConfig::boundary_v() const {
  return has("boundary.v") ? to_ints(get_ints("boundary.v")) : boundary_u();
}

std::vector<int> RunConfig::boundary_u_alt() const {
  if (has("boundary.u_alt")) return to_ints(get_ints("boundary.u_alt"));
  std::vector<int> u = boundary_u();
  for (int& x : u) x += 2;
  return u;
}

std::vector<double> RunConfig::boundary_u_cont() const {
  if (has("boundary.u_cont")) return get_reals("boundary.u_cont");
  std::vector<double> u;
  for (auto i = get_int("model.n"); i >= 1; --i) u.push_back(static_cast<double>(i));
  return u;
}

Boundary RunConfig::boundary() const {
  if (get_string("boundary.kind") == "bridge") return BridgeBoundary{boundary_u(), boundary_v()};
  return WalkBoundary{boundary_u()};
}

EnsembleSpec RunConfig::ensemble(double lambda) const {
  const Boundary b = boundary();
  int x_max = static_cast<int>(get_int("engine.x_max"));
  if (x_max <= 0) x_max = default_x_max(tilt(lambda), b);
  return EnsembleSpec::make(static_cast<int>(get_int("model.n")),
                            static_cast<int>(get_int("window.m")),
                            static_cast<int>(get_int("window.n")), b, x_max);
}

McmcParams RunConfig::mcmc() const {
  McmcParams p;
  p.block_len = static_cast<int>(get_int("mcmc.block_len"));
  p.overlap = static_cast<int>(get_int("mcmc.overlap"));
  p.sweeps = static_cast<int>(get_int("mcmc.sweeps"));
  p.burn_in = static_cast<int>(get_int("mcmc.burn_in"));
  p.thin = static_cast<int>(get_int("mcmc.thin"));
  p.chains = static_cast<int>(get_int("mcmc.chains"));
  p.seed = seed();
  p.validate();
  return p;
}

GridSpec RunConfig::grid() const {
  const int n = static_cast<int>(get_int("model.n"));
  double cap = get_real("grid.cap");
  if (cap <= 0.0) cap = GridSpec::default_cap(n, get_real("model.a"));
  return GridSpec::make(get_real("grid.dx"), cap, get_real("grid.m"));
}

void RunConfig::validate() const {
  if (experiment_.empty()) fail(ErrorCode::MissingRequired, "missing required key 'experiment'");
  if (threads() < 1) fail(ErrorCode::InvalidArgument, "threads must be >= 1");
  if (get_int("model.n") < 1) fail(ErrorCode::InvalidArgument, "model.n must be >= 1");
  const Kernel k = kernel();
  (void)k;
  const std::string& e = experiment_;
  if (e == "invariance" || e == "converge") {
    const auto lambdas = get_reals("model.lambdas");
    if (lambdas.empty()) fail(ErrorCode::InvalidArgument, "model.lambdas is empty");
    for (double l : lambdas) tilt(l);
    if (get_string("model.potential") != "linear") {
      fail(ErrorCode::InvalidArgument, e + " requires the linear potential");
    }
    GridSpec::make(get_real("grid.dx"), 1.0, 1.0);
  } else {
    tilt(get_real("model.lambda"));
  }
  if (e == "exact" || e == "sample" || e == "blocks" || e == "dominance") {
    ensemble(get_real("model.lambda"));
  }
  if (e == "sample" || e == "blocks" || e == "converge") mcmc();
  if (e == "blocks") {
    const auto ms = get_ints("blocks.m");
    if (ms.empty()) fail(ErrorCode::InvalidArgument, "blocks.m is empty");
    const double h_big = h_scale(tilt(get_real("model.lambda")).potential()).h_big;
    const double need = 2.0 * static_cast<double>(*std::max_element(ms.begin(), ms.end())) * h_big * h_big;
    if (-get_int("window.m") < need || get_int("window.n") < need) {
      fail(ErrorCode::InvalidArgument, "blocks: the window must contain [-" + format_real(std::ceil(need)) +
                                           ", " + format_real(std::ceil(need)) + "] to cover 2 max(blocks.m)");
    }
  }
  if (e == "oracle" || e == "dominance") {
    grid();
    TiltSpec::make(get_real("model.a"), get_real("model.b"), Potential::linear(1.0));
  }
  if (e == "slope" && get_reals("slope.t").size() < 2) {
    fail(ErrorCode::InvalidArgument, "slope.t needs at least two values");
  }
}

RunConfig parse_config(std::string_view text, std::optional<std::string> experiment) {
  RunConfig c;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<std::string> seen;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    seen.push_back(key);
    c.set(key, line.substr(eq + 1));
  }
  if (experiment) {
    if (!c.experiment().empty() && c.experiment() != *experiment) {
      fail(ErrorCode::InvalidArgument, "experiment '" + *experiment +
                                           "' does not match the config's '" + c.experiment() + "'");
    }
    c.set_experiment(*experiment);
  }
  c.validate();
  return c;
}

std::string emit_config(const RunConfig& config) {
  std::string out = "experiment = " + config.experiment() + "\n";
  for (const auto& [key, value] : config.values()) out += key + " = " + value_text(value) + "\n";
  return out;
}

std::string canonical_config(const RunConfig& config) {
  std::string out = "experiment = " + config.experiment() + "\n";
  for (const auto& spec : kKeys) {
    if (spec.key == "threads" || spec.key == "output.dir") continue;
    std::string text;
    if (config.has(spec.key)) {
      text = value_text(config.values().at(std::string(spec.key)));
    } else if (spec.key == "boundary.u") {
      const std::vector<int> u = config.boundary_u();
      text = value_text(ConfigValue(std::vector<std::int64_t>(u.begin(), u.end())));
    } else if (spec.key == "boundary.u_cont") {
      text = value_text(ConfigValue(config.boundary_u_cont()));
    } else if (spec.fallback.empty()) {
      continue;
    } else {
      text = value_text(parse_value(spec, spec.fallback));
    }
    out += std::string(spec.key) + " = " + text + "\n";
  }
  return out;
}

std::string content_hash(std::string_view text) {
  const std::string header = "blob " + std::to_string(text.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) fail(ErrorCode::Io, "cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, text.data(), text.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) fail(ErrorCode::Io, "SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// ---- CSV ----

std::string format_real(double x) {
  if (std::isnan(x)) fail(ErrorCode::Emission, "NaN cannot be emitted");
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string emit_csv(const CsvTable& table) {
  const auto cell_text = [](const CsvCell& cell) {
    return std::visit(
        [](const auto& x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, double>) {
            return format_real(x);
          } else if constexpr (std::is_same_v<T, std::string>) {
            if (x.find_first_of(",\"\n\r") == std::string::npos) return x;
            std::string q = "\"";
            for (char ch : x) {
              if (ch == '"') q += '"';
              q += ch;
            }
            return q + "\"";
          } else {
            return std::to_string(x);
          }
        },
        cell);
  };
  if (table.header.empty()) fail(ErrorCode::Emission, "CSV '" + table.name + "' has no header");
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out += (i ? "," : "") + cell_text(table.header[i]);
  }
  out += '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      fail(ErrorCode::Emission, "CSV '" + table.name + "' row " + std::to_string(r) + " has " +
                                    std::to_string(row.size()) + " cells");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      try {
        out += (i ? "," : "") + cell_text(row[i]);
      } catch (const Error&) {
        fail(ErrorCode::Emission, "CSV '" + table.name + "' row " + std::to_string(r) +
                                      " column '" + table.header[i] + "' is NaN");
      }
    }
    out += '\n';
  }
  return out;
}

CsvTable to_csv(const MixingReport& report) {
  CsvTable t{"mixing", {"K", "tv", "log_tv"}, {}};
  for (const auto& p : report.points) {
    t.rows.push_back({std::int64_t(p.k), p.tv, p.tv > 0.0 ? std::log(p.tv) : kLogZero});
  }
  return t;
}

// ---- runs ----

RunOutcome execute(const RunConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::string& e = config.experiment();
  ExperimentResult res;
  if (e == "exact") res = run_exact(config);
  else if (e == "sample") res = run_sample(config);
  else if (e == "mixing") res = run_mixing(config);
  else if (e == "invariance") res = run_invariance(config);
  else if (e == "converge") res = run_converge(config);
  else if (e == "dominance") res = run_dominance(config);
  else if (e == "blocks") res = run_blocks(config);
  else if (e == "slope") res = run_slope(config);
  else res = run_oracle(config);

  RunOutcome out;
  // render the CSVs first so NaN cells surface before anything is reported
  for (const auto& t : res.tables) emit_csv(t);
  const std::string canonical = canonical_config(config);
  Json env;
  env["version"] = kVersion;
  env["experiment"] = e;
  Json cfg = Json::object();
  std::istringstream lines(canonical);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find(" = ");
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  env["config"] = cfg;
  env["config_hash"] = content_hash(canonical);
  env["verdict"] = res.pass ? (*res.pass ? "PASS" : "FAIL") : "n/a";
  env["payload"] = res.payload;
  Json files = Json::array();
  for (const auto& t : res.tables) files.push_back(t.name + ".csv");
  env["files"] = files;
  res.timings["threads"] = config.threads();
  res.timings["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  env["timings"] = res.timings;
  out.results_json = env.dump(2) + "\n";
  out.tables = std::move(res.tables);
  out.exit_code = res.pass && !*res.pass ? 2 : 0;
  return out;
}

void write_outputs(const RunOutcome& outcome, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    fail(ErrorCode::Io, "cannot create output directory '" + dir + "'" +
                            (ec ? ": " + ec.message() : std::string()));
  }
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& t : outcome.tables) files.emplace_back(t.name + ".csv", emit_csv(t));
  files.emplace_back("results.json", outcome.results_json);
  for (const auto& [name, content] : files) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
    f.close();
    if (!f) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  }
}

int run(const RunConfig& config) {
  const RunOutcome outcome = execute(config);
  write_outputs(outcome, config.output_dir());
  return outcome.exit_code;
}

}  // namespace ensembles
