#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ensembles/brownian_oracle.hpp"

using namespace ensembles;

namespace {

double mean_top(const Distribution& d, double dx) {
  const auto pmf = oracle_coordinate_pmf(d, 0);
  double m = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) m += pmf[k] * k * dx;
  return m;
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

}  // namespace

TEST_CASE("grid spec") {
  const GridSpec g = GridSpec::make(0.1, 5.0, 1.0);
  CHECK(g.dt() == doctest::Approx(0.01));
  CHECK(g.heights() == 50);
  CHECK(g.steps() == 200);
  CHECK(GridSpec::default_cap(1, 1.0) == doctest::Approx(35.0));
  CHECK(GridSpec::default_cap(3, 2.0) == doctest::Approx(23.0));
  CHECK(code_of([] { GridSpec::make(0.0, 5.0, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("untilted bridge marginals are time symmetric") {
  const PolymerChamber chamber(1, 0.0, 2.0, GridSpec::make(0.1, 6.0, 1.0));
  const auto bc = PolymerBoundary::fixed({1.0}, std::vector<double>{1.0});
  for (double t : {0.2, 0.5, 0.9}) {
    CHECK(tv_exact(polymer_marginal(chamber, bc, t), polymer_marginal(chamber, bc, -t)) < 1e-12);
  }
  const PolymerChamber two(2, 0.0, 2.0, GridSpec::make(0.2, 4.0, 1.0));
  const auto bc2 = PolymerBoundary::fixed({1.0, 0.4}, std::vector<double>{1.0, 0.4});
  CHECK(tv_exact(polymer_marginal(two, bc2, 0.4), polymer_marginal(two, bc2, -0.4)) < 1e-12);
}

TEST_CASE("n = 1 matches a direct scalar chain") {
  const double dx = 0.1, a = 1.3, m = 0.5;
  const GridSpec grid = GridSpec::make(dx, 5.0, m);
  const PolymerChamber chamber(1, a, 2.0, grid);
  const Distribution got =
      polymer_marginal(chamber, PolymerBoundary::fixed({0.7}, std::vector<double>{1.2}), 0.0);

  const int k = grid.heights();
  std::vector<double> taps;
  double total = 0.0;
  for (int d = -8; d <= 8; ++d) {
    taps.push_back(std::exp(-0.5 * d * d));
    total += taps.back();
  }
  const auto step = [&](const std::vector<double>& in) {
    std::vector<double> out(static_cast<std::size_t>(k) + 1, 0.0);
    for (int i = 1; i <= k; ++i) {
      for (int j = 1; j <= k; ++j) {
        if (std::abs(i - j) <= 8) out[static_cast<std::size_t>(j)] += in[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j - i + 8)] / total;
      }
    }
    return out;
  };
  const auto g = [&](int i) { return std::exp(-a * i * dx * grid.dt()); };
  std::vector<double> alpha(static_cast<std::size_t>(k) + 1, 0.0), beta(static_cast<std::size_t>(k) + 1, 0.0);
  alpha[7] = 1.0;
  beta[12] = 1.0;
  const int half = grid.steps() / 2;
  for (int s = 0; s < half; ++s) {
    for (int i = 1; i <= k; ++i) alpha[static_cast<std::size_t>(i)] *= g(i);
    alpha = step(alpha);
  }
  for (int s = 0; s < grid.steps() - half; ++s) {
    beta = step(beta);
    for (int i = 1; i <= k; ++i) beta[static_cast<std::size_t>(i)] *= g(i);
  }
  double z = 0.0;
  for (int i = 1; i <= k; ++i) z += alpha[static_cast<std::size_t>(i)] * beta[static_cast<std::size_t>(i)];
  const auto pmf = oracle_coordinate_pmf(got, 0);
  for (int i = 1; i <= k; ++i) {
    CHECK(std::abs(pmf[static_cast<std::size_t>(i)] - alpha[static_cast<std::size_t>(i)] * beta[static_cast<std::size_t>(i)] / z) < 1e-12);
  }
}

TEST_CASE("entropic repulsion and refinement on the standard instance") {
  double prev = 1.0;
  for (double dx : {0.2, 0.1, 0.05}) {
    const PolymerChamber chamber(1, 1.0, 2.0, GridSpec::make(dx, 35.0, 2.0));
    const auto pmf = oracle_coordinate_pmf(polymer_marginal(chamber, PolymerBoundary::zero(), 0.0), 0);
    CHECK(pmf[1] < prev);
    prev = pmf[1];
  }
  const PolymerChamber coarse(1, 1.0, 2.0, GridSpec::make(0.1, 35.0, 2.0));
  const PolymerChamber fine(1, 1.0, 2.0, GridSpec::make(0.05, 35.0, 2.0));
  const double m1 = mean_top(polymer_marginal(coarse, PolymerBoundary::zero(), 0.0), 0.1);
  const double m2 = mean_top(polymer_marginal(fine, PolymerBoundary::zero(), 0.0), 0.05);
  CHECK(std::abs(m1 - m2) <= 0.02 * m2);
}

TEST_CASE("zero boundary extrapolation") {
  const PolymerChamber chamber(1, 1.0, 2.0, GridSpec::make(0.05, 35.0, 2.0));
  const ZeroBcReport r = zero_bc_extrapolate(chamber);
  CHECK(r.tv_fine <= r.tv_coarse);
  CHECK(r.direction_tv <= 0.02);
  double total = 0.0;
  for (double p : r.law.probs()) total += p;
  CHECK(std::abs(total - 1.0) < 1e-10);

  const PolymerChamber two(2, 1.0, 2.0, GridSpec::make(0.1, 10.0, 1.0));
  const ZeroBcReport r2 = zero_bc_extrapolate(two);
  CHECK(r2.tv_fine <= r2.tv_coarse);
}

TEST_CASE("stationary density") {
  const PolymerChamber chamber(1, 1.0, 2.0, GridSpec::make(0.05, 35.0, 2.0));
  const StationaryResult st = stationary_density(chamber);
  const auto pmf = oracle_coordinate_pmf(st.density, 0);
  double total = 0.0;
  std::size_t mode = 1;
  for (std::size_t k = 1; k < pmf.size(); ++k) {
    CHECK(pmf[k] > 0.0);
    total += pmf[k];
    if (pmf[k] > pmf[mode]) mode = k;
  }
  CHECK(std::abs(total - 1.0) < 1e-10);
  CHECK(pmf[0] == 0.0);
  CHECK(pmf[1] < 0.02 * pmf[mode]);
  for (std::size_t k = 2; k < pmf.size(); ++k) {
    if (k <= mode) CHECK(pmf[k] >= pmf[k - 1]);
    if (k > mode) CHECK(pmf[k] <= pmf[k - 1]);
  }
  // fine-grid recomputation of the mean
  const PolymerChamber finer(1, 1.0, 2.0, GridSpec::make(0.025, 35.0, 2.0));
  const double m1 = mean_top(st.density, 0.05);
  const auto fine_pmf = oracle_coordinate_pmf(stationary_density(finer).density, 0);
  const double m2 = mean_top(stationary_density(finer).density, 0.025);
  CHECK(std::abs(m1 - m2) < 0.01 * m2);
  // the density vanishes linearly-squared at the wall: the first cell shrinks
  CHECK(fine_pmf[1] / *std::max_element(fine_pmf.begin(), fine_pmf.end()) <
        pmf[1] / pmf[mode]);

  double prev = 1.0;
  for (double m : {1.0, 2.0, 4.0}) {
    const PolymerChamber c(1, 1.0, 2.0, GridSpec::make(0.05, 35.0, m));
    const double tv = tv_exact(polymer_marginal(c, PolymerBoundary::zero(), 0.0), st.density);
    CHECK(tv < prev);
    prev = tv;
  }
  CHECK(prev <= 0.02);

  CHECK(code_of([&] { stationary_density(chamber, 1e-12, 5); }) == ErrorCode::NoConvergence);
}

TEST_CASE("free boundary conditions") {
  const PolymerChamber chamber(1, 1.0, 2.0, GridSpec::make(0.05, 35.0, 4.0));
  const Distribution free_both = free_marginal(chamber, PolymerBoundary::Kind::FreeBoth, 0.0);
  const Distribution left = free_marginal(chamber, PolymerBoundary::Kind::FreeBoth, -4.0);
  const Distribution tower = polymer_marginal(chamber, PolymerBoundary::free_right(left), 0.0);
  CHECK(tv_exact(free_both, tower) <= 1e-9);
  const StationaryResult st = stationary_density(chamber);
  CHECK(tv_exact(free_both, st.density) <= 0.02);
  const Distribution from_zero = free_marginal(chamber, PolymerBoundary::Kind::FreeRight, 0.0);
  CHECK(tv_exact(from_zero, st.density) <= 0.02);
  CHECK(code_of([&] { free_marginal(chamber, PolymerBoundary::Kind::Fixed, 0.0); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { polymer_marginal(chamber, PolymerBoundary::zero(), 4.5); }) ==
        ErrorCode::OutOfRange);
}

TEST_CASE("stationary top marginals stabilize in n") {
  const GridSpec grid = GridSpec::make(0.25, 10.0, 1.0);
  std::vector<std::vector<double>> tops;
  for (int n = 1; n <= 3; ++n) {
    const PolymerChamber chamber(n, 1.0, 2.0, grid);
    tops.push_back(oracle_coordinate_pmf(stationary_density(chamber).density, 0));
  }
  const auto tv = [](const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
  };
  CHECK(tv(tops[1], tops[2]) < tv(tops[0], tops[1]));
}
