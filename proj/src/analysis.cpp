#include "ensembles/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ensembles/parallel.hpp"

namespace ensembles {

namespace {

constexpr const char* kModule = "analysis";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

bool same_kind(const Boundary& a, const Boundary& b) { return a.index() == b.index(); }

// Values of x_1 on [lo, hi]: the interpolant at both ends and every grid time
// strictly inside.
template <typename Fn>
void scan_top(const RescaledPath& p, double lo, double hi, Fn&& fn) {
  fn(p(0, lo));
  fn(p(0, hi));
  const auto times = p.times();
  auto it = std::upper_bound(times.begin(), times.end(), lo);
  for (; it != times.end() && *it < hi; ++it) {
    fn(p.grid_value(0, static_cast<std::size_t>(it - times.begin())));
  }
}

bool point_regular(const RescaledPath& p, double t, double eta, double eps) {
  const int n = p.n();
  if (p(0, t) > eta) return false;
  for (int i = 0; i + 1 < n; ++i) {
    if (p(i, t) - p(i + 1, t) < eps) return false;
  }
  return p(n - 1, t) > 0.0;
}

bool spans(const RescaledPath& p, double lo, double hi) {
  return p.t_min() <= lo + 1e-12 && p.t_max() >= hi - 1e-12;
}

// Add `mass` spread uniformly over [lo, hi] to bins of width w whose centers
// are origin + j w (j may be negative; offset shifts it into the vector).
void spread(std::vector<double>& bins, long offset, double origin, double w, double lo,
            double hi, double mass) {
  if (mass == 0.0) return;
  const double width = hi - lo;
  const long first = static_cast<long>(std::floor((lo - origin) / w + 0.5));
  const long last = static_cast<long>(std::floor((hi - origin) / w + 0.5));
  for (long j = first; j <= last; ++j) {
    const double b_lo = origin + (static_cast<double>(j) - 0.5) * w;
    const double b_hi = b_lo + w;
    const double overlap = std::min(hi, b_hi) - std::max(lo, b_lo);
    if (overlap <= 0.0) continue;
    const long idx = j + offset;
    if (idx < 0) continue;  // below the wall
    if (static_cast<std::size_t>(idx) >= bins.size()) bins.resize(static_cast<std::size_t>(idx) + 1, 0.0);
    bins[static_cast<std::size_t>(idx)] += mass * overlap / width;
  }
}

}  // namespace

std::optional<LogLinearFit> fit_log_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::InvalidArgument, "fit: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > 1e-12) {
      xs.push_back(x[i]);
      ys.push_back(std::log(y[i]));
    }
  }
  if (xs.size() < 2) return std::nullopt;
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LogLinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - fit.intercept - fit.slope * xs[i];
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.points = static_cast<int>(xs.size());
  return fit;
}

// ---- mixing ----

MixingReport mixing_curve(const EnsembleSpec& base, const Kernel& kernel, const TiltSpec& tilt,
                          int t_lattice, std::vector<int> k_list, const BoundaryPair& pair,
                          int threads) {
  if (!same_kind(pair.first, pair.second)) {
    fail(ErrorCode::InvalidArgument, "mixing: boundaries must both be walks or both bridges");
  }
  if (t_lattice < 0) fail(ErrorCode::InvalidArgument, "mixing: T_lattice must be >= 0");
  if (pair.extra_first < 0 || pair.extra_second < 0) {
    fail(ErrorCode::InvalidArgument, "mixing: extra widths must be >= 0");
  }
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] < 1) fail(ErrorCode::InvalidArgument, "mixing: K must be >= 1");
    if (i > 0 && k_list[i] <= k_list[i - 1]) {
      fail(ErrorCode::InvalidArgument, "mixing: K list must be strictly increasing");
    }
  }
  std::vector<int> times;
  for (int t = -t_lattice; t <= t_lattice; ++t) times.push_back(t);

  MixingReport report;
  report.bridge = std::holds_alternative<BridgeBoundary>(pair.first);
  report.t_lattice = t_lattice;
  report.points.resize(k_list.size());
  parallel_for(k_list.size(), threads, [&](std::size_t i) {
    const int half = k_list[i] + t_lattice;
    const auto law = [&](const Boundary& b, int extra) {
      const EnsembleSpec spec = EnsembleSpec::make(base.n(), -half - extra, half + extra, b,
                                                   base.x_max());
      return ExactEngine(spec, kernel, tilt).law_restricted(times);
    };
    const Distribution p = law(pair.first, pair.extra_first);
    const Distribution q = law(pair.second, pair.extra_second);
    report.points[i] = {k_list[i], tv_exact(p, q)};
  });

  std::vector<double> ks, tvs;
  for (const auto& pt : report.points) {
    ks.push_back(pt.k);
    tvs.push_back(pt.tv);
  }
  report.fit = fit_log_linear(ks, tvs);
  report.strictly_decreasing = report.points.size() >= 2;
  for (std::size_t i = 1; i < tvs.size(); ++i) {
    if (!(tvs[i] < tvs[i - 1])) report.strictly_decreasing = false;
    if (tvs[i] > tvs[i - 1] + 1e-12) report.monotonicity_violated = true;
  }
  return report;
}

// ---- one-dimensional marginals ----

Marginal1D lattice_marginal(const Distribution& d, int curve, double unit) {
  if (d.arity() != 1) fail(ErrorCode::InvalidArgument, "marginal: expected a one-time law");
  return {unit, d.coordinate_pmf(0, curve)};
}

Marginal1D oracle_marginal(const Distribution& d, int curve, double dx) {
  return lattice_marginal(d, curve, dx);
}

double oracle_cdf(const Marginal1D& m, double x) {
  double f = 0.0;
  for (std::size_t k = 0; k < m.pmf.size(); ++k) {
    const double lo = (static_cast<double>(k) - 0.5) * m.unit;
    const double frac = std::clamp((x - lo) / m.unit, 0.0, 1.0);
    if (frac == 0.0) break;
    f += m.pmf[k] * frac;
  }
  return f;
}

double lattice_sup_cdf_distance(const Marginal1D& lattice, const Marginal1D& oracle) {
  const double extent = (static_cast<double>(oracle.pmf.size()) + 0.5) * oracle.unit;
  const auto last = std::max<std::size_t>(lattice.pmf.size(),
                                          static_cast<std::size_t>(extent / lattice.unit) + 2);
  double below = 0.0;
  double dist = 0.0;
  for (std::size_t k = 0; k <= last; ++k) {
    const double p = k < lattice.pmf.size() ? lattice.pmf[k] : 0.0;
    const double mid = below + 0.5 * p;
    dist = std::max(dist, std::abs(mid - oracle_cdf(oracle, static_cast<double>(k) * lattice.unit)));
    below += p;
  }
  return dist;
}

double binned_tv(const Marginal1D& lattice, int period, const Marginal1D& oracle) {
  if (period < 1) fail(ErrorCode::InvalidArgument, "binned_tv: period must be >= 1");
  std::size_t k0 = 0;
  while (k0 < lattice.pmf.size() && lattice.pmf[k0] == 0.0) ++k0;
  if (k0 == lattice.pmf.size()) fail(ErrorCode::InvalidArgument, "binned_tv: empty lattice law");
  const double cell = period * lattice.unit;
  const double w = std::max(cell, oracle.unit);
  const double origin = static_cast<double>(k0) * lattice.unit;
  // enough negative bins to reach height 0
  const long offset = static_cast<long>(std::ceil(origin / w)) + 1;
  std::vector<double> p, q;
  for (std::size_t k = 0; k < lattice.pmf.size(); ++k) {
    const double x = static_cast<double>(k) * lattice.unit;
    spread(p, offset, origin, w, x - 0.5 * cell, x + 0.5 * cell, lattice.pmf[k]);
  }
  for (std::size_t k = 0; k < oracle.pmf.size(); ++k) {
    const double x = static_cast<double>(k) * oracle.unit;
    spread(q, offset, origin, w, x - 0.5 * oracle.unit, x + 0.5 * oracle.unit, oracle.pmf[k]);
  }
  const std::size_t len = std::max(p.size(), q.size());
  p.resize(len, 0.0);
  q.resize(len, 0.0);
  double tv = 0.0;
  for (std::size_t i = 0; i < len; ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

// ---- dominance ----

DominanceReport dominance_check(const Marginal1D& lower, const Marginal1D& upper) {
  const double scale = std::max(std::abs(lower.unit), std::abs(upper.unit));
  if (std::abs(lower.unit - upper.unit) > 1e-12 * scale) {
    fail(ErrorCode::GridMismatch, "dominance: marginals live on different grids (unit " +
                                      std::to_string(lower.unit) + " vs " +
                                      std::to_string(upper.unit) + ")");
  }
  const std::size_t len = std::max(lower.pmf.size(), upper.pmf.size());
  const auto at = [](const std::vector<double>& v, std::size_t k) {
    return k < v.size() ? v[k] : 0.0;
  };
  // survival sums S(k) = sum_{j >= k}
  std::vector<double> s_lo(len + 1, 0.0), s_up(len + 1, 0.0);
  for (std::size_t k = len; k-- > 0;) {
    s_lo[k] = s_lo[k + 1] + at(lower.pmf, k);
    s_up[k] = s_up[k + 1] + at(upper.pmf, k);
  }
  DominanceReport r{true, 0.0, 0.0, len};
  double f_lo = 0.0, f_up = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    f_lo += at(lower.pmf, k);
    f_up += at(upper.pmf, k);
    // F_upper - F_lower, from whichever end is accurate
    const double d = f_lo <= 0.5 ? f_up - f_lo : s_lo[k + 1] - s_up[k + 1];
    if (d > 0.0) r.pass = false;
    r.max_violation = std::max(r.max_violation, d);
    r.max_gap = std::max(r.max_gap, -d);
  }
  return r;
}

// ---- good blocks ----

bool interval_regular(const RescaledPath& x, int ell, double eta, double eps) {
  const double lo = ell, hi = ell + 1.0;
  if (!point_regular(x, lo, eta, eps) || !point_regular(x, hi, eta, eps)) return false;
  bool ok = true;
  scan_top(x, lo, hi, [&](double v) {
    if (v > 2.0 * eta) ok = false;
  });
  return ok;
}

GoodBlockReport good_blocks(const RescaledPath& x, const RescaledPath& y, double eta, double eps,
                            int m_blocks) {
  if (m_blocks < 1) fail(ErrorCode::InvalidArgument, "good_blocks: M must be >= 1");
  if (x.n() != y.n()) fail(ErrorCode::InvalidArgument, "good_blocks: curve counts differ");
  const double reach = 2.0 * m_blocks;
  if (!spans(x, -reach, reach) || !spans(y, -reach, reach)) {
    fail(ErrorCode::InvalidArgument, "good_blocks: paths must span [-2M, 2M]");
  }
  GoodBlockReport r{eta, eps, m_blocks, 0, 0, {}, {}};
  const auto good = [&](const RescaledPath& p, int ell) {
    return interval_regular(p, 2 * ell, eta, eps) && interval_regular(p, 2 * ell + 1, eta, eps);
  };
  for (int ell = -m_blocks; ell < m_blocks; ++ell) {
    BlockFlags f{ell, good(x, ell), good(y, ell), false};
    f.joint = f.good_x && f.good_y;
    r.m0 += f.joint ? 1 : 0;
    r.blocks.push_back(f);
  }
  // min of x_1 over D_j = [2j, 2j + 2] is at most eta
  const auto low_somewhere = [&](const RescaledPath& p, int j) {
    const double lo = 2.0 * j, hi = lo + 2.0;
    if (!spans(p, lo, hi)) return false;
    double m = p(0, lo);
    scan_top(p, lo, hi, [&](double v) { m = std::min(m, v); });
    return m <= eta;
  };
  const auto pre_good = [&](const RescaledPath& p, int ell) {
    return low_somewhere(p, 5 * ell - 2) && low_somewhere(p, 5 * ell + 2);
  };
  for (int ell = -(m_blocks / 5); ell <= m_blocks / 5; ++ell) {
    BlockFlags f{ell, pre_good(x, ell), pre_good(y, ell), false};
    f.joint = f.good_x && f.good_y;
    r.m0_5 += f.joint ? 1 : 0;
    r.five_blocks.push_back(f);
  }
  return r;
}

BlockStatistics good_block_statistics(std::shared_ptr<const EnsembleSpec> spec,
                                      const Kernel& kernel, const TiltSpec& tilt,
                                      const McmcParams& params, double eta, double eps,
                                      const std::vector<int>& m_list, int threads) {
  params.validate();
  if (m_list.empty()) fail(ErrorCode::InvalidArgument, "block statistics: empty M list");
  const ScaleInfo scale = h_scale(tilt.potential());
  const double sigma = kernel.sigma();
  const auto chains = static_cast<std::size_t>(2 * params.chains);
  std::vector<std::vector<RescaledPath>> paths(chains);
  parallel_for(chains, threads, [&](std::size_t c) {
    run_chain(spec, kernel, tilt, params, static_cast<int>(c),
              [&](const PathConfig& p) { paths[c].push_back(rescale(p, scale, sigma)); });
  });

  // m0[pair][index into m_list]
  std::vector<std::vector<int>> m0;
  for (std::size_t c = 0; c + 1 < chains; c += 2) {
    for (std::size_t i = 0; i < paths[c].size(); ++i) {
      std::vector<int> row;
      for (int m : m_list) row.push_back(good_blocks(paths[c][i], paths[c + 1][i], eta, eps, m).m0);
      m0.push_back(std::move(row));
    }
  }
  BlockStatistics out;
  out.pairs = m0.size();
  if (m0.empty()) fail(ErrorCode::TooShort, "block statistics: no samples kept");
  double pooled = 0.0;
  for (const auto& row : m0) {
    for (std::size_t j = 0; j < m_list.size(); ++j) pooled += row[j] / (2.0 * m_list[j]);
  }
  pooled /= static_cast<double>(m0.size() * m_list.size());
  out.nu = 0.5 * pooled;
  for (std::size_t j = 0; j < m_list.size(); ++j) {
    double density = 0.0, below = 0.0;
    for (const auto& row : m0) {
      density += row[j] / (2.0 * m_list[j]);
      if (row[j] <= out.nu * m_list[j]) below += 1.0;
    }
    const double count = static_cast<double>(m0.size());
    out.points.push_back({m_list[j], density / count, below / count});
  }
  out.decreasing = out.points.size() >= 2 && out.points.back().prob_below < out.points.front().prob_below;
  for (std::size_t j = 1; j < out.points.size(); ++j) {
    if (out.points[j].prob_below > out.points[j - 1].prob_below) out.decreasing = false;
  }
  return out;
}

// ---- invariance principle ----

std::vector<int> lattice_boundary(std::span<const double> u, double h_big, double sigma) {
  std::vector<int> out(u.size());
  int floor_value = 1;
  for (std::size_t i = u.size(); i-- > 0;) {
    out[i] = std::max(floor_value, static_cast<int>(std::lround(h_big * sigma * u[i])));
    floor_value = out[i] + 1;
  }
  return out;
}

std::vector<InvariancePoint> invariance_check(const InvarianceSetup& setup,
                                              const std::vector<double>& lambdas,
                                              const Kernel& kernel, int threads) {
  if (setup.m_cont <= 0.0) fail(ErrorCode::InvalidArgument, "invariance: M must be positive");
  if (std::abs(setup.t_obs) > setup.m_cont) {
    fail(ErrorCode::InvalidArgument, "invariance: observation time outside [-M, M] (T > M)");
  }
  if (static_cast<int>(setup.u.size()) != setup.n ||
      (setup.v && static_cast<int>(setup.v->size()) != setup.n)) {
    fail(ErrorCode::InvalidArgument, "invariance: boundary size differs from n");
  }
  const double sigma = kernel.sigma();
  const double cap =
      setup.height_cap > 0.0 ? setup.height_cap : GridSpec::default_cap(setup.n, setup.a * sigma);
  const GridSpec grid = GridSpec::make(setup.dx, cap, setup.m_cont);
  const auto oracle_at = [&](std::vector<double> u, std::optional<std::vector<double>> v) {
    const Distribution law = polymer_marginal(setup.n, setup.a * sigma, setup.b, grid,
                                              PolymerBoundary::fixed(std::move(u), std::move(v)),
                                              setup.t_obs);
    return oracle_marginal(law, 0, setup.dx);
  };
  std::optional<Marginal1D> nominal;
  if (!setup.match_lattice_boundary) nominal = oracle_at(setup.u, setup.v);

  std::vector<InvariancePoint> out(lambdas.size());
  parallel_for(lambdas.size(), threads, [&](std::size_t i) {
    const double lambda = lambdas[i];
    const Potential pot = Potential::linear(lambda);
    const ScaleInfo scale = h_scale(pot);
    const double h2 = scale.h_big * scale.h_big;
    const int half = static_cast<int>(std::ceil(h2 * setup.m_cont - 1e-9));
    const std::vector<int> u = lattice_boundary(setup.u, scale.h_big, sigma);
    Boundary boundary = WalkBoundary{u};
    std::optional<std::vector<int>> v;
    if (setup.v) {
      v = lattice_boundary(*setup.v, scale.h_big, sigma);
      boundary = BridgeBoundary{u, *v};
    }
    const TiltSpec tilt = TiltSpec::make(setup.a, setup.b, pot);
    const EnsembleSpec spec =
        EnsembleSpec::make(setup.n, -half, half, boundary, default_x_max(tilt, boundary));
    const ExactEngine engine(spec, kernel, tilt);
    const int j = static_cast<int>(std::lround(setup.t_obs * h2));
    const double unit = scale.h_small / sigma;
    const Marginal1D lattice = lattice_marginal(engine.marginal(j), 0, unit);
    const auto scaled = [unit](const std::vector<int>& x) {
      std::vector<double> out;
      for (int k : x) out.push_back(k * unit);
      return out;
    };
    std::optional<std::vector<double>> v_cont;
    if (v) v_cont = scaled(*v);
    const Marginal1D oracle = nominal ? *nominal : oracle_at(scaled(u), v_cont);
    out[i] = {lambda, half, u, lattice_sup_cdf_distance(lattice, oracle)};
  });
  return out;
}

// ---- convergence ----

int inverse_lambda_rule(double lambda) {
  return std::max(1, static_cast<int>(std::lround(1.0 / lambda)));
}

int inverse_lambda_ceil_rule(double lambda) {
  return std::max(1, static_cast<int>(std::ceil(1.0 / lambda - 1e-9)));
}

std::vector<ConvergencePoint> convergence_to_mu(const ConvergenceSetup& setup,
                                                const std::vector<double>& lambdas,
                                                const Kernel& kernel, int threads) {
  if (static_cast<int>(setup.u.size()) != setup.n) {
    fail(ErrorCode::InvalidArgument, "converge: boundary size differs from n");
  }
  const double sigma = kernel.sigma();
  const double a_eff = setup.a * sigma;
  const double cap = setup.height_cap > 0.0 ? setup.height_cap : GridSpec::default_cap(setup.n, a_eff);
  const PolymerChamber chamber(setup.n, a_eff, setup.b, GridSpec::make(setup.dx, cap, 1.0));
  const Marginal1D oracle = oracle_marginal(stationary_density(chamber).density, 0, setup.dx);
  const auto rule = setup.n_rule ? setup.n_rule : inverse_lambda_rule;

  std::vector<ConvergencePoint> out(lambdas.size());
  parallel_for(lambdas.size(), threads, [&](std::size_t i) {
    const double lambda = lambdas[i];
    const Potential pot = Potential::linear(lambda);
    const ScaleInfo scale = h_scale(pot);
    const int half = rule(lambda);
    if (half < 1) fail(ErrorCode::InvalidArgument, "converge: half-width must be >= 1");
    const TiltSpec tilt = TiltSpec::make(setup.a, setup.b, pot);
    Boundary boundary = WalkBoundary{setup.u};
    if (setup.mode == BoundaryMode::Bridge) boundary = BridgeBoundary{setup.u, setup.u};
    const auto spec = std::make_shared<const EnsembleSpec>(
        EnsembleSpec::make(setup.n, -half, half, boundary, default_x_max(tilt, boundary)));
    const double unit = scale.h_small / sigma;
    Marginal1D lattice{unit, {}};
    bool exact = true;
    try {
      const ExactEngine engine(*spec, kernel, tilt,
                               setup.budget > 0 ? setup.budget : default_budget());
      lattice = lattice_marginal(engine.marginal(0), 0, unit);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooLarge) throw;
      exact = false;
      const auto run = sample_paths(spec, kernel, tilt, setup.mcmc, 1);
      if (run.first.empty()) fail(ErrorCode::TooShort, "converge: MCMC kept no samples");
      lattice.pmf.assign(static_cast<std::size_t>(spec->x_max()) + 1, 0.0);
      for (const auto& p : run.first) lattice.pmf[static_cast<std::size_t>(p(0, 0))] += 1.0;
      for (double& x : lattice.pmf) x /= static_cast<double>(run.first.size());
    }
    out[i] = {lambda, half, binned_tv(lattice, kernel.period(), oracle), exact};
  });
  return out;
}

// ---- partition-function slope ----

SlopeReport log_partition_slope(const std::vector<int>& w, const Kernel& kernel,
                                const TiltSpec& tilt, const std::vector<double>& t_list,
                                double eta, int x_max, int threads) {
  if (w.empty()) fail(ErrorCode::InvalidArgument, "slope: empty boundary");
  if (t_list.size() < 2) fail(ErrorCode::InvalidArgument, "slope: need at least two T values");
  const ScaleInfo scale = h_scale(tilt.potential());
  const double sigma = kernel.sigma();
  if (w.front() * scale.h_small / sigma > eta) {
    fail(ErrorCode::InvalidArgument, "slope: w_1 exceeds eta after rescaling");
  }
  const double h2 = scale.h_big * scale.h_big;
  const Boundary boundary = WalkBoundary{w};
  const int cutoff = x_max > 0 ? x_max : default_x_max(tilt, boundary);
  std::vector<int> steps;
  for (double t : t_list) {
    const int s = static_cast<int>(std::lround(h2 * t));
    if (s < 1 || (!steps.empty() && s <= steps.back())) {
      fail(ErrorCode::InvalidArgument, "slope: T values must give distinct increasing windows");
    }
    steps.push_back(s);
  }
  SlopeReport r;
  r.points.resize(steps.size());
  parallel_for(steps.size(), threads, [&](std::size_t i) {
    const EnsembleSpec spec = EnsembleSpec::make(static_cast<int>(w.size()), -steps[i], steps[i],
                                                 boundary, cutoff);
    r.points[i] = {steps[i] / h2, steps[i], ExactEngine(spec, kernel, tilt).log_z()};
  });
  bool finite = true;
  for (const auto& p : r.points) finite = finite && std::isfinite(p.log_z);
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    r.local_slopes.push_back((r.points[i].log_z - r.points[i - 1].log_z) /
                             (r.points[i].t - r.points[i - 1].t));
  }
  for (std::size_t i = 1; i < r.local_slopes.size(); ++i) {
    r.max_slope_change = std::max(r.max_slope_change,
                                  std::abs(r.local_slopes[i] - r.local_slopes[i - 1]));
  }
  r.slope = r.local_slopes.back();
  r.intercept = r.points.front().log_z - r.slope * r.points.front().t;
  for (const auto& p : r.points) r.intercept = std::min(r.intercept, p.log_z - r.slope * p.t);
  if (r.local_slopes.size() >= 2 && finite) {
    const double s1 = r.local_slopes[r.local_slopes.size() - 2];
    r.stable = std::abs(r.slope - s1) <= 0.1 * std::abs(r.slope);
  }
  r.pass = finite && std::isfinite(r.slope) && r.stable;
  return r;
}

}  // namespace ensembles
