// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [criterion ...]     (default: all of 1..10)

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ensembles/analysis.hpp"
#include "ensembles/cli_io.hpp"

using namespace ensembles;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // 0: no runtime limit
  std::function<Verdict()> run;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string join(const std::vector<double>& v, const char* f = "%.4g") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(f, v[i]);
  return s;
}

bool weakly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

TiltSpec linear_tilt(double a, double b, double lambda) {
  return TiltSpec::make(a, b, Potential::linear(lambda));
}

// ---- 1: Gibbs property ----

Verdict gibbs_property() {
  Rng rng(20240517);
  int checked = 0;
  double worst = 0.0;
  bool all_enumerated = true;
  for (int trial = 0; trial < 400 && checked < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 2);
    const int len = 2 + static_cast<int>(rng.uniform() * 5);  // window of 2..6 steps
    const int x_max = n + 2 + static_cast<int>(rng.uniform() * (5 - n));  // <= 6
    const Kernel kernel = rng.uniform() < 0.5 ? Kernel::simple_walk() : Kernel::lazy_walk();
    const double lambda = 0.2 + 0.8 * rng.uniform();
    const double b = 1.0 + 3.0 * (1.0 - rng.uniform());  // (1, 4]
    const double a = 0.25 + 1.75 * rng.uniform();
    std::vector<int> u;
    for (int i = 0; i < n; ++i) u.push_back(n - i + (rng.uniform() < 0.5 ? 1 : 0) * (i == 0));
    const bool bridge = rng.uniform() < 0.5;
    const Boundary boundary = bridge ? Boundary(BridgeBoundary{u, u}) : Boundary(WalkBoundary{u});
    std::optional<ExactEngine> engine;
    try {
      engine.emplace(EnsembleSpec::make(n, 0, len, boundary, x_max), kernel, linear_tilt(a, b, lambda));
    } catch (const Error&) {
      continue;  // infeasible instance (e.g. parity)
    }
    const PathConfig path = engine->sample_one(rng);
    const int k = static_cast<int>(rng.uniform() * (len - 1));
    const int l = k + 2 + static_cast<int>(rng.uniform() * (len - k - 1));
    const auto law = engine->conditional_bridge_law(k, std::min(l, len), path.column(k),
                                                    path.column(std::min(l, len)));
    worst = std::max(worst, law.diagnostic_tv);
    all_enumerated = all_enumerated && law.enumerated;
    ++checked;
  }
  return {checked >= 50 && worst <= 1e-10,
          std::to_string(checked) + " instances, max diagnostic tv " + fmt("%.3g", worst) +
              (all_enumerated ? ", all by enumeration" : "")};
}

// ---- 2: exact sampler fidelity ----

double chi_square_p(const std::vector<double>& expected_p, const std::vector<double>& counts,
                    double total) {
  // pool cells with expected count below 5 into their neighbour
  std::vector<double> e, o;
  double acc_e = 0.0, acc_o = 0.0;
  for (std::size_t h = 0; h < expected_p.size(); ++h) {
    acc_e += expected_p[h] * total;
    acc_o += counts[h];
    if (acc_e >= 5.0) {
      e.push_back(acc_e);
      o.push_back(acc_o);
      acc_e = acc_o = 0.0;
    }
  }
  if (!e.empty()) {
    e.back() += acc_e;
    o.back() += acc_o;
  }
  if (e.size() < 2) return 1.0;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) chi2 += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  boost::math::chi_squared dist(static_cast<double>(e.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

Verdict sampler_fidelity() {
  const std::size_t count = 100000;
  double min_p = 1.0;
  const std::vector<std::pair<std::string, Boundary>> cases = {
      {"walk", WalkBoundary{{2}}}, {"bridge", BridgeBoundary{{2}, {2}}}};
  for (const auto& [name, boundary] : cases) {
    const EnsembleSpec spec = EnsembleSpec::make(1, 0, 4, boundary, 20);
    const ExactEngine engine(spec, Kernel::simple_walk(), linear_tilt(1.0, 2.0, 0.5));
    const auto samples = engine.sample(11, count, 2);
    for (int t = 1; t <= 4; ++t) {
      const auto pmf = engine.marginal(t).coordinate_pmf(0, 0);
      std::vector<double> counts(pmf.size(), 0.0);
      for (const auto& s : samples) counts[static_cast<std::size_t>(s(0, t))] += 1.0;
      min_p = std::min(min_p, chi_square_p(pmf, counts, static_cast<double>(count)));
    }
  }
  return {min_p > 0.001, "n=1, window [0,4], 1e5 samples per mode, min chi-square p " + fmt("%.3g", min_p)};
}

// ---- 3: MCMC correctness ----

Verdict mcmc_correctness() {
  const Kernel kernel = Kernel::simple_walk();
  const TiltSpec tilt = linear_tilt(1.0, 2.0, 0.3);
  const Boundary w = WalkBoundary{{1}};
  const auto spec = std::make_shared<const EnsembleSpec>(
      EnsembleSpec::make(1, -10, 10, w, default_x_max(tilt, w)));
  const ExactEngine engine(*spec, kernel, tilt);

  McmcParams params;
  params.block_len = 8;
  params.overlap = 4;
  params.burn_in = 500;
  params.sweeps = 150000;
  params.seed = 2024;
  const int times = spec->length();
  std::vector<std::vector<double>> counts(static_cast<std::size_t>(times),
                                          std::vector<double>(static_cast<std::size_t>(spec->x_max()) + 1, 0.0));
  std::vector<double> series, area;
  bool boundary_ok = true;
  run_chain(spec, kernel, tilt, params, 0, [&](const PathConfig& p) {
    boundary_ok = boundary_ok && p(0, spec->m_left()) == 1;
    for (int t = spec->m_left(); t <= spec->n_right(); ++t) {
      counts[static_cast<std::size_t>(t - spec->m_left())][static_cast<std::size_t>(p(0, t))] += 1.0;
    }
    series.push_back(top_at_center(p));
    area.push_back(area_functional(p, tilt));
  });
  // effective sample size from the slower of the two observables
  const double tau = std::max(autocorr(series), autocorr(area));
  const double ess = static_cast<double>(series.size()) / (2.0 * tau);
  double worst = 0.0;
  for (int t = spec->m_left(); t <= spec->n_right(); ++t) {
    const auto pmf = engine.marginal(t).coordinate_pmf(0, 0);
    const auto& c = counts[static_cast<std::size_t>(t - spec->m_left())];
    double tv = 0.0;
    for (std::size_t h = 0; h < pmf.size(); ++h) {
      tv += std::abs(pmf[h] - c[h] / static_cast<double>(series.size()));
    }
    worst = std::max(worst, tv / 2.0);
  }
  return {boundary_ok && ess >= 1e5 && worst <= 0.02,
          "window [-10,10], lambda 0.3, tau " + fmt("%.3f", tau) + ", ess " + fmt("%.0f", ess) +
              ", max tv over times " + fmt("%.4f", worst) +
              (boundary_ok ? ", boundary fixed" : ", BOUNDARY CHANGED")};
}

// ---- 4: mixing decay ----

Verdict mixing_decay() {
  const Kernel kernel = Kernel::simple_walk();
  const TiltSpec tilt = linear_tilt(1.0, 2.0, 0.5);
  bool pass = true;
  std::string detail;
  for (const bool bridge : {false, true}) {
    const BoundaryPair pair =
        bridge ? BoundaryPair{BridgeBoundary{{1}, {1}}, BridgeBoundary{{3}, {3}}}
               : BoundaryPair{WalkBoundary{{1}}, WalkBoundary{{3}}};
    const EnsembleSpec base = EnsembleSpec::make(1, -1, 1, pair.first, default_x_max(tilt, pair.second));
    const MixingReport r = mixing_curve(base, kernel, tilt, 1, {1, 2, 3, 4, 5, 6}, pair, 2);
    const bool ok = r.strictly_decreasing && r.fit && r.fit->r2 >= 0.9;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + (bridge ? "bridge" : "walk") + " c2 " +
              (r.fit ? fmt("%.4f", -r.fit->slope) + " r2 " + fmt("%.4f", r.fit->r2) : "n/a") +
              (r.strictly_decreasing ? " decreasing" : " NOT decreasing");
  }
  return {pass, detail};
}

// ---- 5: invariance principle ----

Verdict invariance() {
  InvarianceSetup s;  // n = 1, u = 1, [-1, 1], t = 0, dx = 0.05
  const auto pts = invariance_check(s, {0.4, 0.2, 0.1}, Kernel::lazy_walk(), 2);
  std::vector<double> d;
  for (const auto& p : pts) d.push_back(p.distance);
  return {weakly_decreasing(d) && d.back() <= 0.08, "lazy walk, sup-cdf distances " + join(d)};
}

// ---- 6: convergence to the stationary law ----

Verdict convergence() {
  std::vector<std::vector<double>> tv(2);
  for (const auto mode : {BoundaryMode::Walk, BoundaryMode::Bridge}) {
    ConvergenceSetup s;
    s.mode = mode;
    for (const auto& p : convergence_to_mu(s, {0.5, 0.3, 0.2}, Kernel::lazy_walk(), 2)) {
      tv[mode == BoundaryMode::Walk ? 0 : 1].push_back(p.tv);
    }
  }
  const double gap = std::abs(tv[0].back() - tv[1].back());
  return {weakly_decreasing(tv[0]) && weakly_decreasing(tv[1]) && gap <= 0.05,
          "N = round(1/lambda), walk " + join(tv[0]) + ", bridge " + join(tv[1]) + ", end gap " +
              fmt("%.4f", gap)};
}

// ---- 7: dominance and sandwich ----

Verdict dominance() {
  int checks = 0, violations = 0;
  double worst = 0.0;
  struct Grid {
    int n;
    double dx, cap;
  };
  for (const Grid g : {Grid{1, 0.05, 35.0}, Grid{2, 0.1, 12.0}}) {
    const PolymerChamber chamber(g.n, 1.0, 2.0, GridSpec::make(g.dx, g.cap, 2.0));
    std::vector<double> u, raised;
    for (int i = 0; i < g.n; ++i) {
      u.push_back(g.n - i);
      raised.push_back(g.n - i + 1.0);
    }
    const std::vector<std::pair<Distribution, Distribution>> pairs = {
        {polymer_marginal(chamber, PolymerBoundary::fixed(u), 0.0),
         polymer_marginal(chamber, PolymerBoundary::fixed(raised), 0.0)},
        {polymer_marginal(chamber, PolymerBoundary::zero(), 0.0),
         free_marginal(chamber, PolymerBoundary::Kind::FreeRight, 0.0)},
        {free_marginal(chamber, PolymerBoundary::Kind::FreeRight, 0.0),
         free_marginal(chamber, PolymerBoundary::Kind::FreeBoth, 0.0)},
    };
    for (const auto& [lo, hi] : pairs) {
      for (int curve = 0; curve < g.n; ++curve) {
        const auto r = dominance_check(lattice_marginal(lo, curve, g.dx), lattice_marginal(hi, curve, g.dx));
        ++checks;
        violations += r.pass ? 0 : 1;
        worst = std::max(worst, r.max_violation);
      }
    }
  }
  // exploratory: lattice walks from u = 1 and u = 3, lambda = 0.3, at time 0
  std::string walk = "walk-side";
  const TiltSpec tilt = linear_tilt(1.0, 2.0, 0.3);
  const int x_max = default_x_max(tilt, WalkBoundary{{3}});
  for (const Kernel& k : {Kernel::simple_walk(), Kernel::lazy_walk()}) {
    const Distribution lo = ExactEngine(EnsembleSpec::make(1, -6, 6, WalkBoundary{{1}}, x_max), k, tilt).marginal(0);
    const Distribution hi = ExactEngine(EnsembleSpec::make(1, -6, 6, WalkBoundary{{3}}, x_max), k, tilt).marginal(0);
    const auto r = dominance_check(lattice_marginal(lo, 0, 1.0), lattice_marginal(hi, 0, 1.0));
    walk += std::string(k.period() == 2 ? " srw " : " lazy ") + (r.pass ? "ordered" : "violated") +
            " (max violation " + fmt("%.2g", r.max_violation) + ")";
  }
  return {violations == 0, std::to_string(checks) + " oracle checks (n=1,2), " +
                               std::to_string(violations) + " violations, max " + fmt("%.2g", worst) +
                               "; " + walk + " [non-gating]"};
}

// ---- 8: partition lower bound ----

Verdict partition_slope() {
  bool pass = true;
  std::string detail;
  for (const auto& w : {std::vector<int>{1}, std::vector<int>{2, 1}}) {
    const SlopeReport r = log_partition_slope(w, Kernel::lazy_walk(), linear_tilt(1.0, 2.0, 0.3),
                                              {1, 2, 4, 8, 16}, 2.0, 0, 2);
    double second = 0.0;
    for (std::size_t i = 1; i < r.local_slopes.size(); ++i) {
      second = std::max(second, std::abs(r.local_slopes[i] - r.local_slopes[i - 1]));
    }
    pass = pass && r.pass;
    detail += std::string(detail.empty() ? "" : "; ") + "n=" + std::to_string(w.size()) +
              " slopes " + join(r.local_slopes) + " (max change " + fmt("%.3g", second) + ")" +
              (r.stable ? "" : " UNSTABLE");
  }
  return {pass, "lazy walk, lambda 0.3, T = 1..16; " + detail};
}

// ---- 9: good blocks ----

Verdict good_blocks_check() {
  const Boundary w = WalkBoundary{{3, 1}};
  const auto spec = std::make_shared<const EnsembleSpec>(
      EnsembleSpec::make(2, -40, 40, w, default_x_max(linear_tilt(1.0, 2.0, 0.2), w)));
  McmcParams p;
  p.sweeps = 3000;
  p.burn_in = 200;
  p.chains = 2;
  p.seed = 9;
  const BlockStatistics st = good_block_statistics(spec, Kernel::lazy_walk(), linear_tilt(1.0, 2.0, 0.2),
                                                   p, 3.0, 0.5, {1, 2, 3, 4, 5, 6}, 2);
  bool positive = true;
  std::vector<double> dens, prob;
  for (const auto& pt : st.points) {
    positive = positive && pt.mean_density > 0.0;
    dens.push_back(pt.mean_density);
    prob.push_back(pt.prob_below);
  }
  return {positive && st.decreasing,
          std::to_string(st.pairs) + " pairs, eta 3, eps 0.5, density " + join(dens, "%.3f") +
              ", nu " + fmt("%.3f", st.nu) + ", P(M0 <= nu M) " + join(prob, "%.3f")};
}

// ---- 10: determinism ----

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string without_timings(const std::string& json) {
  auto j = nlohmann::ordered_json::parse(json);
  j.erase("timings");
  return j.dump(2);
}

Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "ensembles_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(ENSEMBLES_CONFIG_DIR)) {
    if (e.path().extension() == ".cfg") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());
  std::set<std::string> covered;
  std::vector<std::string> mismatched;
  std::size_t files = 0;
  for (const auto& path : configs) {
    RunConfig c = parse_config(slurp(path));
    covered.insert(c.experiment());
    std::vector<fs::path> dirs;
    for (const auto& [tag, threads] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"t8", 8}}) {
      c.set("threads", std::to_string(threads));
      const fs::path dir = root / (path.stem().string() + "_" + tag);
      write_outputs(execute(c), dir.string());
      dirs.push_back(dir);
    }
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      const std::string name = e.path().filename().string();
      const bool json = name == "results.json";
      const std::string ref = json ? without_timings(slurp(e.path())) : slurp(e.path());
      for (std::size_t i = 1; i < dirs.size(); ++i) {
        const std::string other = json ? without_timings(slurp(dirs[i] / name)) : slurp(dirs[i] / name);
        if (other != ref) mismatched.push_back(path.stem().string() + "/" + name);
      }
      ++files;
    }
  }
  fs::remove_all(root);
  const bool all = covered.size() == std::size(kExperiments);
  std::string detail = std::to_string(configs.size()) + " configs, " + std::to_string(covered.size()) +
                       " experiments, " + std::to_string(files) + " files compared (runs a, b at 1 thread, 8 threads)";
  for (const auto& m : mismatched) detail += ", differs: " + m;
  return {all && mismatched.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gibbs property", 10, gibbs_property},
      {2, "exact sampler fidelity", 30, sampler_fidelity},
      {3, "mcmc correctness", 120, mcmc_correctness},
      {4, "mixing decay", 60, mixing_decay},
      {5, "invariance principle", 300, invariance},
      {6, "convergence to the stationary law", 600, convergence},
      {7, "dominance and sandwich", 120, dominance},
      {8, "partition lower bound", 120, partition_slope},
      {9, "good blocks", 300, good_blocks_check},
      {10, "determinism", 0, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v{false, ""};
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds <= 0 || secs < c.limit_seconds;
    const bool pass = v.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                v.detail.c_str(), secs,
                c.limit_seconds > 0 ? (in_time ? fmt(" < %.0f s", c.limit_seconds).c_str()
                                               : fmt(", limit %.0f s exceeded", c.limit_seconds).c_str())
                                    : "");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
