#include "ensembles/brownian_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace ensembles {

namespace {

constexpr std::string_view kModule = "brownian_oracle";
constexpr int kReach = 8;

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

void rescale_max(std::vector<double>& v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, x);
  if (!(peak > 0.0)) fail(ErrorCode::Infeasible, "polymer mass vanished on the grid");
  for (double& x : v) x /= peak;
}

}  // namespace

GridSpec GridSpec::make(double dx, double height_cap, double m) {
  if (!(dx > 0.0) || !std::isfinite(dx)) fail(ErrorCode::InvalidArgument, "dx must be > 0");
  if (!(height_cap >= 2.0 * dx)) fail(ErrorCode::InvalidArgument, "height cap below 2 dx");
  if (!(m > 0.0)) fail(ErrorCode::InvalidArgument, "time half-width must be > 0");
  GridSpec g{dx, height_cap, m};
  if (g.steps() < 1) fail(ErrorCode::InvalidArgument, "time window shorter than one step");
  return g;
}

int GridSpec::heights() const { return static_cast<int>(std::floor(height_cap / dx + 1e-9)); }

int GridSpec::steps() const { return static_cast<int>(std::llround(2.0 * m / dt())); }

double GridSpec::default_cap(int n, double a) { return 30.0 / a + 5.0 + 3.0 / a * (n - 1); }

PolymerBoundary PolymerBoundary::fixed(std::vector<double> u, std::optional<std::vector<double>> v) {
  PolymerBoundary b;
  b.kind = Kind::Fixed;
  b.u = std::move(u);
  b.v = std::move(v);
  return b;
}

PolymerBoundary PolymerBoundary::free_right(std::optional<Distribution> start) {
  PolymerBoundary b;
  b.kind = Kind::FreeRight;
  b.start = std::move(start);
  return b;
}

PolymerBoundary PolymerBoundary::free_both() {
  PolymerBoundary b;
  b.kind = Kind::FreeBoth;
  return b;
}

PolymerChamber::PolymerChamber(int n, double a, double b, const GridSpec& grid,
                               std::size_t budget)
    : n_(n), k_(grid.heights()), grid_(grid) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "n must be >= 1");
  if (!(a >= 0.0) || !(b > 1.0)) fail(ErrorCode::InvalidArgument, "need a >= 0 and b > 1");
  if (k_ < n) fail(ErrorCode::InvalidArgument, "height cap leaves no room for n curves");
  long double box = 1.0L;
  for (int i = 0; i < n; ++i) box *= k_;
  if (box > static_cast<long double>(budget)) {
    fail(ErrorCode::TooLarge, "grid box of " + std::to_string(static_cast<double>(box)) +
                                  " points exceeds budget");
  }
  box_ = static_cast<std::size_t>(box);
  space_ = StateSpace::enumerate(n, k_, budget);

  double total = 0.0;
  for (int d = -kReach; d <= kReach; ++d) {
    taps_.push_back(std::exp(-0.5 * d * d));
    total += taps_.back();
  }
  for (double& w : taps_) w /= total;

  g_.assign(box_, 0.0);
  sqrt_g_.assign(box_, 0.0);
  mask_.assign(box_, 0);
  box_to_state_.assign(box_, 0);
  std::vector<int> coord(static_cast<std::size_t>(n), 1);
  const double dt = grid.dt();
  for (std::size_t idx = 0; idx < box_; ++idx) {
    std::size_t rest = idx;
    for (int i = n - 1; i >= 0; --i) {
      coord[static_cast<std::size_t>(i)] = static_cast<int>(rest % static_cast<std::size_t>(k_)) + 1;
      rest /= static_cast<std::size_t>(k_);
    }
    bool inside = true;
    for (int i = 0; i + 1 < n; ++i) inside = inside && coord[static_cast<std::size_t>(i)] > coord[static_cast<std::size_t>(i) + 1];
    if (!inside) continue;
    mask_[idx] = 1;
    double cost = 0.0;
    double weight = a;
    for (int i = 0; i < n; ++i) {
      cost += weight * coord[static_cast<std::size_t>(i)] * grid.dx;
      weight *= b;
    }
    g_[idx] = std::exp(-cost * dt);
    sqrt_g_[idx] = std::exp(-0.5 * cost * dt);
    box_to_state_[idx] = *space_->index_of(coord);
  }
  scratch_.resize(box_);
}

void PolymerChamber::convolve(std::vector<double>& vec) const {
  const std::size_t k = static_cast<std::size_t>(k_);
  std::size_t stride = 1;
  for (int axis = n_ - 1; axis >= 0; --axis) {
    std::fill(scratch_.begin(), scratch_.end(), 0.0);
    const std::size_t block = stride * k;
    for (std::size_t base = 0; base < box_; base += block) {
      for (std::size_t j = 0; j < k; ++j) {
        const int lo = std::max(-kReach, -static_cast<int>(j));
        const int hi = std::min(kReach, static_cast<int>(k - 1 - j));
        double* out = scratch_.data() + base + j * stride;
        for (int d = lo; d <= hi; ++d) {
          const double w = taps_[static_cast<std::size_t>(d + kReach)];
          const double* in = vec.data() + base + (j + static_cast<std::size_t>(static_cast<long>(d))) * stride;
          for (std::size_t r = 0; r < stride; ++r) out[r] += w * in[r];
        }
      }
    }
    vec.swap(scratch_);
    stride *= k;
  }
}

void PolymerChamber::forward(std::vector<double>& vec) const {
  for (std::size_t i = 0; i < box_; ++i) vec[i] *= g_[i];
  convolve(vec);
  for (std::size_t i = 0; i < box_; ++i) vec[i] = mask_[i] ? vec[i] : 0.0;
}

void PolymerChamber::backward(std::vector<double>& vec) const {
  convolve(vec);
  for (std::size_t i = 0; i < box_; ++i) vec[i] *= g_[i];
}

void PolymerChamber::symmetric(std::vector<double>& vec) const {
  for (std::size_t i = 0; i < box_; ++i) vec[i] *= sqrt_g_[i];
  convolve(vec);
  for (std::size_t i = 0; i < box_; ++i) vec[i] *= sqrt_g_[i];
}

std::optional<std::size_t> PolymerChamber::box_index(const std::vector<int>& k) const {
  if (k.size() != static_cast<std::size_t>(n_)) return std::nullopt;
  std::size_t idx = 0;
  for (int i = 0; i < n_; ++i) {
    const int c = k[static_cast<std::size_t>(i)];
    if (c < 1 || c > k_) return std::nullopt;
    idx = idx * static_cast<std::size_t>(k_) + static_cast<std::size_t>(c - 1);
  }
  if (!mask_[idx]) return std::nullopt;
  return idx;
}

std::size_t PolymerChamber::locate(const std::vector<double>& heights) const {
  std::vector<int> k;
  for (double h : heights) k.push_back(static_cast<int>(std::llround(h / grid_.dx)));
  const auto idx = box_index(k);
  if (!idx) fail(ErrorCode::InvalidArgument, "boundary point is not in the grid chamber");
  return *idx;
}

std::vector<double> PolymerChamber::chamber_indicator() const {
  std::vector<double> v(box_);
  for (std::size_t i = 0; i < box_; ++i) v[i] = mask_[i] ? 1.0 : 0.0;
  return v;
}

Distribution PolymerChamber::to_distribution(const std::vector<double>& box_weights) const {
  std::vector<double> lw(space_->size(), kLogZero);
  for (std::size_t i = 0; i < box_; ++i) {
    if (mask_[i] && box_weights[i] > 0.0) lw[box_to_state_[i]] = std::log(box_weights[i]);
  }
  return Distribution(space_, 1, std::move(lw));
}

std::vector<double> PolymerChamber::from_distribution(const Distribution& d) const {
  if (!d.space().same_as(*space_) || d.arity() != 1) {
    fail(ErrorCode::SpaceMismatch, "start law lives on a different grid chamber");
  }
  std::vector<double> v(box_, 0.0);
  for (std::size_t i = 0; i < box_; ++i) {
    if (mask_[i]) v[i] = d.probs()[box_to_state_[i]];
  }
  return v;
}

Distribution polymer_marginal(const PolymerChamber& chamber, const PolymerBoundary& boundary,
                              double t) {
  const GridSpec& grid = chamber.grid();
  const int steps = grid.steps();
  const double pos = (t + grid.m) / grid.dt();
  const long at = std::lround(pos);
  if (at < 0 || at > steps || std::abs(pos - static_cast<double>(at)) > 1e-6 * std::max(1.0, pos)) {
    fail(ErrorCode::OutOfRange, "time is not a grid time in [-M, M]");
  }
  const int n = chamber.n();
  std::vector<double> lowest;
  for (int i = 0; i < n; ++i) lowest.push_back(grid.dx * (n - i));

  using Kind = PolymerBoundary::Kind;
  std::vector<double> right;
  std::optional<std::vector<double>> right_point;
  if (boundary.kind == Kind::ZeroBC) {
    right_point = lowest;
  } else if (boundary.kind == Kind::Fixed && boundary.v) {
    right_point = *boundary.v;
  }
  if (right_point) {
    right.assign(chamber.box_size(), 0.0);
    right[chamber.locate(*right_point)] = 1.0;
  } else {
    right = chamber.chamber_indicator();
  }

  // backward from the right end down to time index 0, keeping beta at `at`
  std::vector<double> beta = right;
  std::vector<double> beta_at;
  if (at == steps) beta_at = beta;
  for (int k = steps - 1; k >= 0; --k) {
    chamber.backward(beta);
    rescale_max(beta);
    if (k == at) beta_at = beta;
  }

  std::vector<double> alpha(chamber.box_size(), 0.0);
  switch (boundary.kind) {
    case Kind::ZeroBC:
      alpha[chamber.locate(lowest)] = 1.0;
      break;
    case Kind::Fixed:
      alpha[chamber.locate(boundary.u)] = 1.0;
      break;
    case Kind::FreeBoth:
      alpha = chamber.chamber_indicator();
      break;
    case Kind::FreeRight:
      if (boundary.start) {
        // Mixture of the normalized laws started at each point: weight
        // mu0(u) / Z^u, with Z^u proportional to beta at time index 0.
        alpha = chamber.from_distribution(*boundary.start);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          alpha[i] = beta[i] > 0.0 ? alpha[i] / beta[i] : 0.0;
        }
        rescale_max(alpha);
      } else {
        alpha[chamber.locate(lowest)] = 1.0;
      }
      break;
  }
  for (long k = 0; k < at; ++k) {
    chamber.forward(alpha);
    rescale_max(alpha);
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] *= beta_at[i];
  return chamber.to_distribution(alpha);
}

Distribution polymer_marginal(int n, double a, double b, const GridSpec& grid,
                              const PolymerBoundary& boundary, double t) {
  return polymer_marginal(PolymerChamber(n, a, b, grid), boundary, t);
}

Distribution free_marginal(const PolymerChamber& chamber, PolymerBoundary::Kind mode, double t) {
  if (mode == PolymerBoundary::Kind::FreeRight) {
    return polymer_marginal(chamber, PolymerBoundary::free_right(), t);
  }
  if (mode == PolymerBoundary::Kind::FreeBoth) {
    return polymer_marginal(chamber, PolymerBoundary::free_both(), t);
  }
  fail(ErrorCode::InvalidArgument, "free_marginal needs FreeRight or FreeBoth");
}

ZeroBcReport zero_bc_extrapolate(const PolymerChamber& chamber) {
  const int n = chamber.n();
  const double dx = chamber.grid().dx;
  const auto law_at = [&](double eps, const std::vector<int>& w) {
    std::vector<double> u;
    for (int x : w) u.push_back(eps * x);
    return polymer_marginal(chamber, PolymerBoundary::fixed(u, u), 0.0);
  };
  std::vector<int> w, w_alt;
  for (int i = 0; i < n; ++i) w.push_back(n - i);
  if (n == 1) {
    w_alt = {2};
  } else {
    w_alt.push_back(n + 1);
    for (int i = 1; i < n; ++i) w_alt.push_back(n - i);
  }
  const Distribution coarse = law_at(4 * dx, w);
  const Distribution mid = law_at(2 * dx, w);
  Distribution fine = law_at(dx, w);
  const Distribution other = law_at(dx, w_alt);
  const double tv_coarse = tv_exact(coarse, mid);
  const double tv_fine = tv_exact(mid, fine);
  const double direction = tv_exact(fine, other);
  return ZeroBcReport{std::move(fine), tv_coarse, tv_fine, direction};
}

StationaryResult stationary_density(const PolymerChamber& chamber, double tol, int max_iter) {
  std::vector<double> phi = chamber.chamber_indicator();
  const auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  double scale = norm(phi);
  for (double& x : phi) x /= scale;
  std::vector<double> next;
  double eigenvalue = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    next = phi;
    chamber.symmetric(next);
    eigenvalue = norm(next);
    if (!(eigenvalue > 0.0)) fail(ErrorCode::NoConvergence, "operator annihilated the iterate");
    double diff = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] /= eigenvalue;
      diff += (next[i] - phi[i]) * (next[i] - phi[i]);
    }
    phi.swap(next);
    if (std::sqrt(diff) < tol) {
      std::vector<double> density(phi.size());
      const auto indicator = chamber.chamber_indicator();
      for (std::size_t i = 0; i < phi.size(); ++i) {
        if (indicator[i] > 0.0 && !(phi[i] > 0.0)) {
          fail(ErrorCode::NoConvergence, "leading eigenvector is not strictly positive");
        }
        density[i] = phi[i] * phi[i];
      }
      return StationaryResult{chamber.to_distribution(density), eigenvalue, it};
    }
  }
  fail(ErrorCode::NoConvergence,
       "power iteration did not reach tolerance in " + std::to_string(max_iter) + " iterations");
}

std::vector<double> oracle_coordinate_pmf(const Distribution& d, int curve) {
  return d.coordinate_pmf(0, curve);
}

}  // namespace ensembles
