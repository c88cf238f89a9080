#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "doctest.h"
#include "ensembles/gibbs_sampler.hpp"

using namespace ensembles;

namespace {

const Kernel kSrw = Kernel::simple_walk();
const Kernel kLazy = Kernel::lazy_walk();

std::shared_ptr<const EnsembleSpec> bridge(int n, int m, int nn, std::vector<int> u,
                                           std::vector<int> v, int x_max) {
  return std::make_shared<const EnsembleSpec>(
      EnsembleSpec::make(n, m, nn, BridgeBoundary{std::move(u), std::move(v)}, x_max));
}

std::shared_ptr<const EnsembleSpec> walk(int n, int m, int nn, std::vector<int> u, int x_max) {
  return std::make_shared<const EnsembleSpec>(
      EnsembleSpec::make(n, m, nn, WalkBoundary{std::move(u)}, x_max));
}

TiltSpec tilt(double a, double b, double lambda) {
  return TiltSpec::make(a, b, Potential::linear(lambda));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

// Index of the interior of a path in the product of the engine's state space.
std::size_t interior_index(const PathConfig& p, const StateSpace& space) {
  std::size_t idx = 0;
  const auto& s = p.spec();
  const int last = s.is_bridge() ? s.n_right() - 1 : s.n_right();
  for (int t = s.m_left() + 1; t <= last; ++t) idx = idx * space.size() + *space.index_of(p.column(t));
  return idx;
}

std::vector<int> interior_times(const EnsembleSpec& s) {
  std::vector<int> times;
  const int last = s.is_bridge() ? s.n_right() - 1 : s.n_right();
  for (int t = s.m_left() + 1; t <= last; ++t) times.push_back(t);
  return times;
}

double empirical_tv(const std::vector<double>& counts, const Distribution& law) {
  double total = 0.0;
  for (double c : counts) total += c;
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) tv += std::abs(counts[i] / total - law.probs()[i]);
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("params validation") {
  McmcParams p;
  CHECK_NOTHROW(p.validate());
  p.overlap = 8;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  p = McmcParams{};
  p.thin = 0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  p = McmcParams{};
  p.block_len = 1;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("init_config") {
  Rng rng(1);
  const auto spec = bridge(1, 0, 2, {1}, {1}, 10);
  const PathConfig p = init_config(spec, kSrw, rng);
  CHECK(p.column(1) == std::vector<int>{2});

  CHECK(code_of([&] { init_config(bridge(1, 0, 2, {1}, {2}, 10), kSrw, rng); }) ==
        ErrorCode::Infeasible);

  const auto t = tilt(1.0, 2.0, 0.3);
  for (const auto& s : {bridge(3, -50, 60, {5, 3, 1}, {9, 4, 2}, 200), walk(2, 0, 300, {2, 1}, 40)}) {
    const PathConfig c = init_config(s, kLazy, rng);
    CHECK(std::isfinite(log_tilt_weight(c, t)));
  }
  const auto srw = bridge(2, 0, 101, {4, 1}, {3, 2}, 40);
  const PathConfig c = init_config(srw, kSrw, rng);
  CHECK(ordering_ok(c));
}

TEST_CASE("resample_block contract") {
  const auto spec = bridge(2, 0, 12, {4, 2}, {3, 1}, 30);
  const auto t = tilt(0.8, 2.0, 0.5);
  BlockSampler sampler(spec, kLazy, t);
  Rng rng(3);
  PathConfig p = init_config(spec, kLazy, rng);
  const PathConfig before = p;
  sampler.resample_block(p, 4, 5, rng);
  CHECK(p == before);
  for (int rep = 0; rep < 200; ++rep) {
    PathConfig q = p;
    sampler.resample_block(q, 3, 9, rng);
    for (int j = 0; j <= 3; ++j) CHECK(q.column(j) == p.column(j));
    for (int j = 9; j <= 12; ++j) CHECK(q.column(j) == p.column(j));
    CHECK(std::isfinite(log_tilt_weight(q, t)));
    p = q;
  }
  CHECK(code_of([&] { sampler.resample_block(p, 3, 13, rng); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("full-window resample is an exact sample") {
  // small bridge: path law over the interior enumerated exactly
  const auto spec = bridge(1, 0, 6, {1}, {3}, 6);
  const auto t = tilt(0.7, 2.0, 0.6);
  ExactEngine engine(*spec, kLazy, t);
  const Distribution law = engine.law_restricted(interior_times(*spec));
  BlockSampler sampler(spec, kLazy, t);
  Rng rng(17);
  PathConfig p = init_config(spec, kLazy, rng);
  std::vector<double> counts(law.size(), 0.0);
  const int draws = 100'000;
  for (int i = 0; i < draws; ++i) {
    sampler.resample_block(p, 0, 6, rng);
    counts[interior_index(p, engine.step().space())] += 1.0;
  }
  double chi2 = 0.0;
  int cells = 0;
  double pool_o = 0.0, pool_e = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = law.probs()[i] * draws;
    if (e < 5.0) {
      pool_o += counts[i];
      pool_e += e;
      continue;
    }
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
    ++cells;
  }
  if (pool_e > 0.0) {
    chi2 += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
    ++cells;
  }
  REQUIRE(cells > 2);
  boost::math::chi_squared dist(cells - 1);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.001);
}

TEST_CASE("one sweep preserves the exact law") {
  for (const auto& spec : {bridge(1, 0, 5, {2}, {1}, 5), walk(1, 0, 4, {2}, 5)}) {
    const auto t = tilt(0.5, 2.0, 0.4);
    ExactEngine engine(*spec, kLazy, t);
    const Distribution law = engine.law_restricted(interior_times(*spec));
    McmcParams params;
    params.block_len = 2;
    params.overlap = 1;
    BlockSampler sampler(spec, kLazy, t);
    const std::size_t chains = 100'000;
    const auto starts = engine.sample(5, chains);
    std::vector<double> counts(law.size(), 0.0);
    Rng rng(23);
    for (auto p : starts) {
      sampler.sweep(p, params, rng);
      counts[interior_index(p, engine.step().space())] += 1.0;
    }
    CHECK(empirical_tv(counts, law) <= 0.02);
  }
}

TEST_CASE("sweep with a long block is an exact resample and is deterministic") {
  const auto spec = walk(2, 0, 6, {3, 1}, 12);
  const auto t = tilt(0.5, 2.0, 0.4);
  McmcParams params;
  params.block_len = 10;
  params.overlap = 1;
  ExactEngine engine(*spec, kLazy, t);
  const Distribution law = engine.law_restricted({3});
  BlockSampler sampler(spec, kLazy, t);
  Rng rng(4);
  PathConfig p = init_config(spec, kLazy, rng);
  std::vector<double> counts(law.size(), 0.0);
  for (int i = 0; i < 50'000; ++i) {
    sampler.sweep(p, params, rng);
    counts[*law.space().index_of(p.column(3))] += 1.0;
  }
  CHECK(empirical_tv(counts, law) <= 0.02);

  McmcParams small;
  small.sweeps = 30;
  small.burn_in = 5;
  small.seed = 77;
  const auto a = sample_paths(spec, kLazy, t, small);
  const auto b = sample_paths(spec, kLazy, t, small);
  REQUIRE(a.first.size() == 25);
  for (std::size_t i = 0; i < a.first.size(); ++i) CHECK(a.first[i] == b.first[i]);
}

TEST_CASE("sample_paths marginals and chains") {
  const auto spec = walk(1, 0, 12, {1}, 80);
  const auto t = tilt(1.0, 2.0, 0.3);
  ExactEngine engine(*spec, kSrw, t);
  const Distribution exact = engine.marginal(6);

  McmcParams params;
  params.sweeps = 0;
  auto empty = sample_paths(spec, kSrw, t, params);
  CHECK(empty.first.empty());
  CHECK(!empty.second.tau_top.has_value());

  params.sweeps = 20'000;
  params.burn_in = 100;
  params.chains = 2;
  params.seed = 1;
  const auto run1 = sample_paths(spec, kSrw, t, params, 2);
  params.seed = 2;
  const auto run2 = sample_paths(spec, kSrw, t, params, 1);
  CHECK(run1.first.size() == 2 * 19'900);
  REQUIRE(run1.second.tau_top.has_value());
  CHECK(*run1.second.tau_top >= 0.5);
  CHECK(run1.second.acceptance == 1.0);

  std::vector<double> c1(exact.size(), 0.0), c2(exact.size(), 0.0);
  const int boundary[] = {1};
  for (const auto& p : run1.first) {
    c1[*exact.space().index_of(p.column(6))] += 1.0;
    CHECK(p.column(0) == std::vector<int>(boundary, boundary + 1));
  }
  for (const auto& p : run2.first) c2[*exact.space().index_of(p.column(6))] += 1.0;
  CHECK(empirical_tv(c1, exact) <= 0.03);
  double tv12 = 0.0;
  for (std::size_t i = 0; i < c1.size(); ++i) {
    tv12 += std::abs(c1[i] / run1.first.size() - c2[i] / run2.first.size());
  }
  CHECK(0.5 * tv12 <= 0.03);
}

TEST_CASE("diagnostics across b") {
  for (double b : {1.5, 2.0, 4.0}) {
    const auto spec = bridge(2, 0, 30, {3, 1}, {3, 1}, 40);
    McmcParams params;
    params.sweeps = 300;
    params.burn_in = 20;
    const auto out = sample_paths(spec, kLazy, tilt(1.0, b, 0.3), params);
    CHECK(out.first.size() == 280);
    for (const auto& p : out.first) {
      CHECK(std::isfinite(log_tilt_weight(p, tilt(1.0, b, 0.3))));
      CHECK(p.column(30) == std::vector<int>{3, 1});
    }
  }
}

TEST_CASE("autocorr") {
  Rng rng(8);
  std::vector<double> iid(100'000);
  for (double& x : iid) x = rng.normal();
  const double tau = autocorr(iid);
  CHECK(tau >= 0.45);
  CHECK(tau <= 0.6);

  std::vector<double> ar(1'000'000);
  double x = 0.0;
  for (double& y : ar) {
    x = 0.5 * x + rng.normal();
    y = x;
  }
  CHECK(autocorr(ar) == doctest::Approx(1.5).epsilon(0.1));

  const std::vector<double> constant(100, 2.0);
  CHECK(code_of([&] { autocorr(constant); }) == ErrorCode::TooShort);
  const std::vector<double> tiny(5, 1.0);
  CHECK(code_of([&] { autocorr(tiny); }) == ErrorCode::TooShort);
}
