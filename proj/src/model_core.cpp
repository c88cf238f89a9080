#include "ensembles/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ensembles {

namespace {

constexpr std::string_view kModule = "model_core";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

void check_boundary_vector(const std::vector<int>& w, int n, int x_max, const char* name) {
  if (static_cast<int>(w.size()) != n) {
    fail(ErrorCode::InvalidArgument, std::string(name) + " must have n entries");
  }
  for (int i = 0; i + 1 < n; ++i) {
    if (w[i] <= w[i + 1]) {
      fail(ErrorCode::InvalidArgument, std::string(name) + " must be strictly decreasing");
    }
  }
  if (w.back() < 1) fail(ErrorCode::InvalidArgument, std::string(name) + " must be >= 1");
  if (w.front() > x_max) {
    fail(ErrorCode::InvalidArgument, std::string(name) + "_1 exceeds x_max");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Kernel

Kernel Kernel::make(std::vector<int> offsets, std::vector<double> probs) {
  if (offsets.empty() || offsets.size() != probs.size()) {
    fail(ErrorCode::InvalidArgument, "offsets and probs must be non-empty and of equal length");
  }
  std::vector<std::size_t> order(offsets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return offsets[a] < offsets[b]; });

  Kernel k;
  for (std::size_t i : order) {
    if (!(probs[i] > 0.0)) fail(ErrorCode::InvalidArgument, "probabilities must be positive");
    if (!k.offsets_.empty() && k.offsets_.back() == offsets[i]) {
      fail(ErrorCode::InvalidArgument, "duplicate offset " + std::to_string(offsets[i]));
    }
    k.offsets_.push_back(offsets[i]);
    k.probs_.push_back(probs[i]);
    k.log_probs_.push_back(std::log(probs[i]));
  }

  double total = 0.0;
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < k.offsets_.size(); ++i) {
    const double z = k.offsets_[i];
    total += k.probs_[i];
    mean += z * k.probs_[i];
    second += z * z * k.probs_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "probabilities sum to " << total;
    fail(ErrorCode::NotNormalized, os.str());
  }
  if (std::abs(mean) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "kernel mean is " << mean;
    fail(ErrorCode::NonzeroMean, os.str());
  }

  int generator = 0;
  int period = 0;
  for (int z : k.offsets_) {
    generator = std::gcd(generator, std::abs(z));
    period = std::gcd(period, std::abs(z - k.offsets_.front()));
    k.max_step_ = std::max(k.max_step_, std::abs(z));
  }
  if (generator != 1) {
    fail(ErrorCode::NotIrreducible,
         "support generates " + std::to_string(generator) + "Z, not Z");
  }
  k.period_ = std::max(period, 1);
  k.variance_ = second - mean * mean;
  return k;
}

double Kernel::sigma() const { return std::sqrt(variance_); }

double Kernel::log_prob(int z) const {
  const auto it = std::lower_bound(offsets_.begin(), offsets_.end(), z);
  if (it == offsets_.end() || *it != z) return kLogZero;
  return log_probs_[static_cast<std::size_t>(it - offsets_.begin())];
}

// ---------------------------------------------------------------------------
// Potential

Potential Potential::linear(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCode::InvalidArgument, "lambda must be positive");
  }
  Potential p;
  p.kind_ = Kind::Linear;
  p.lambda_ = lambda;
  return p;
}

Potential Potential::table(std::vector<double> xs, std::vector<double> base_values,
                           double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCode::InvalidArgument, "lambda must be positive");
  }
  if (xs.size() < 2 || xs.size() != base_values.size()) {
    fail(ErrorCode::InvalidArgument, "potential table needs >= 2 matching samples");
  }
  if (xs.front() != 0.0 || base_values.front() != 0.0) {
    fail(ErrorCode::InvalidArgument, "potential table must start at (0, 0)");
  }
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) fail(ErrorCode::InvalidArgument, "table x must increase");
    if (base_values[i] < base_values[i - 1]) {
      fail(ErrorCode::InvalidArgument, "potential table must be non-decreasing");
    }
  }
  const std::size_t last = xs.size() - 1;
  if (!(base_values[last] > base_values[last - 1])) {
    fail(ErrorCode::InvalidArgument,
         "last table segment must increase so the extrapolation tends to infinity");
  }
  Potential p;
  p.kind_ = Kind::Table;
  p.lambda_ = lambda;
  p.xs_ = std::move(xs);
  p.gs_ = std::move(base_values);
  return p;
}

double Potential::operator()(double x) const {
  if (kind_ == Kind::Linear) return lambda_ * x;
  const std::size_t count = xs_.size();
  std::size_t seg;
  if (x <= xs_[1]) {
    seg = 0;
  } else if (x >= xs_[count - 1]) {
    seg = count - 2;
  } else {
    seg = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin()) - 1;
  }
  const double slope = (gs_[seg + 1] - gs_[seg]) / (xs_[seg + 1] - xs_[seg]);
  return lambda_ * (gs_[seg] + slope * (x - xs_[seg]));
}

Potential Potential::with_lambda(double lambda) const {
  if (!(lambda > 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be positive");
  Potential p = *this;
  p.lambda_ = lambda;
  return p;
}

Potential Potential::with_q0(std::function<double(double)> q0) const {
  Potential p = *this;
  p.q0_ = std::move(q0);
  return p;
}

// ---------------------------------------------------------------------------
// TiltSpec

TiltSpec TiltSpec::make(double a, double b, Potential potential) {
  if (!(a > 0.0) || !std::isfinite(a)) fail(ErrorCode::InvalidArgument, "a must be > 0");
  if (!(b > 1.0) || !std::isfinite(b)) fail(ErrorCode::InvalidArgument, "b must be > 1");
  return TiltSpec(a, b, std::move(potential));
}

TiltSpec TiltSpec::zero_tilt(double b, Potential potential) {
  if (!(b > 1.0) || !std::isfinite(b)) fail(ErrorCode::InvalidArgument, "b must be > 1");
  return TiltSpec(0.0, b, std::move(potential));
}

double TiltSpec::site_cost(int curve, double x) const {
  if (a_ == 0.0) return 0.0;
  return a_ * std::pow(b_, curve) * potential_(x);
}

TiltSpec TiltSpec::with_a(double a) const {
  return a == 0.0 ? zero_tilt(b_, potential_) : make(a, b_, potential_);
}

TiltSpec TiltSpec::with_lambda(double lambda) const {
  return TiltSpec(a_, b_, potential_.with_lambda(lambda));
}

// ---------------------------------------------------------------------------
// EnsembleSpec

EnsembleSpec EnsembleSpec::make(int n, int m_left, int n_right, Boundary boundary, int x_max) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "n must be >= 1");
  if (m_left >= n_right) fail(ErrorCode::InvalidArgument, "window needs m_left < n_right");
  if (x_max < n) fail(ErrorCode::InvalidArgument, "x_max must be >= n");
  if (const auto* walk = std::get_if<WalkBoundary>(&boundary)) {
    check_boundary_vector(walk->u, n, x_max, "u");
  } else {
    const auto& bridge = std::get<BridgeBoundary>(boundary);
    check_boundary_vector(bridge.u, n, x_max, "u");
    check_boundary_vector(bridge.v, n, x_max, "v");
  }
  EnsembleSpec s;
  s.n_ = n;
  s.m_left_ = m_left;
  s.n_right_ = n_right;
  s.boundary_ = std::move(boundary);
  s.x_max_ = x_max;
  return s;
}

const std::vector<int>& EnsembleSpec::u() const {
  return std::visit([](const auto& b) -> const std::vector<int>& { return b.u; }, boundary_);
}

const std::vector<int>* EnsembleSpec::v() const {
  if (const auto* bridge = std::get_if<BridgeBoundary>(&boundary_)) return &bridge->v;
  return nullptr;
}

EnsembleSpec EnsembleSpec::with_x_max(int x_max) const {
  return make(n_, m_left_, n_right_, boundary_, x_max);
}

EnsembleSpec EnsembleSpec::with_window(int m_left, int n_right) const {
  return make(n_, m_left, n_right, boundary_, x_max_);
}

EnsembleSpec EnsembleSpec::with_boundary(Boundary boundary) const {
  return make(n_, m_left_, n_right_, std::move(boundary), x_max_);
}

int default_x_max(const TiltSpec& tilt, const Boundary& boundary) {
  int top = std::visit([](const auto& b) { return b.u.empty() ? 1 : b.u.front(); }, boundary);
  if (const auto* bridge = std::get_if<BridgeBoundary>(&boundary)) {
    if (!bridge->v.empty()) top = std::max(top, bridge->v.front());
  }
  const Potential& v = tilt.potential();
  double x30;
  if (v.kind() == Potential::Kind::Linear) {
    x30 = 30.0 / v.lambda();
  } else {
    double lo = 0.0;
    double hi = 1.0;
    while (v(hi) < 30.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-9 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (v(mid) < 30.0 ? lo : hi) = mid;
    }
    x30 = hi;
  }
  return static_cast<int>(std::ceil(x30 + top + 5.0));
}

// ---------------------------------------------------------------------------
// PathConfig

PathConfig::PathConfig(std::shared_ptr<const EnsembleSpec> spec, std::vector<int> heights)
    : spec_(std::move(spec)), heights_(std::move(heights)) {
  const std::size_t expected =
      static_cast<std::size_t>(spec_->n()) * static_cast<std::size_t>(spec_->length());
  if (heights_.size() != expected) {
    fail(ErrorCode::InvalidArgument, "height matrix has wrong dimensions");
  }
  for (int h : heights_) {
    if (h < 0) fail(ErrorCode::InvalidArgument, "heights must be nonnegative");
  }
  const auto check = [&](int t, const std::vector<int>& want, const char* name) {
    for (int i = 0; i < spec_->n(); ++i) {
      if ((*this)(i, t) != want[static_cast<std::size_t>(i)]) {
        fail(ErrorCode::InvalidArgument, std::string("boundary column does not match ") + name);
      }
    }
  };
  check(spec_->m_left(), spec_->u(), "u");
  if (const auto* v = spec_->v()) check(spec_->n_right(), *v, "v");
}

std::vector<int> PathConfig::column(int t) const {
  std::vector<int> col(static_cast<std::size_t>(n()));
  for (int i = 0; i < n(); ++i) col[static_cast<std::size_t>(i)] = (*this)(i, t);
  return col;
}

void PathConfig::set_column(int t, std::span<const int> values) {
  if (!spec_->contains_time(t)) fail(ErrorCode::OutOfRange, "time outside window");
  if (t == spec_->m_left() || (spec_->is_bridge() && t == spec_->n_right())) {
    fail(ErrorCode::InvalidArgument, "boundary columns are pinned");
  }
  if (values.size() != static_cast<std::size_t>(n())) {
    fail(ErrorCode::InvalidArgument, "column has wrong size");
  }
  const std::size_t len = static_cast<std::size_t>(length());
  const std::size_t k = static_cast<std::size_t>(t - spec_->m_left());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0) fail(ErrorCode::InvalidArgument, "heights must be nonnegative");
    heights_[i * len + k] = values[i];
  }
}

// ---------------------------------------------------------------------------
// Scaling

ScaleInfo h_scale(const Potential& potential) {
  const double lambda = potential.lambda();
  if (potential.kind() == Potential::Kind::Linear) {
    const double big = std::cbrt(1.0 / lambda);
    return {lambda, big, 1.0 / big};
  }
  const auto f = [&](double h) { return h * h * potential(h) - 1.0; };
  double lo = 0.0;
  double hi = 1.0;
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) fail(ErrorCode::NoRoot, "H^2 V(H) = 1 has no root");
  }
  // f is non-decreasing, so plain bisection converges to the unique root.
  for (int it = 0; it < 2000 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  const double big = 0.5 * (lo + hi);
  if (!(big > 0.0)) fail(ErrorCode::NoRoot, "degenerate potential");
  return {lambda, big, 1.0 / big};
}

std::optional<double> q0_margin(const Potential& potential, std::span<const double> rs) {
  if (!potential.q0()) return std::nullopt;
  const double big = h_scale(potential).h_big;
  double worst = std::numeric_limits<double>::infinity();
  for (double r : rs) {
    worst = std::min(worst, big * big * potential(r * big) - potential.q0()(r));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Path functionals

double area_functional(const PathConfig& path, const TiltSpec& tilt, int from, int to) {
  const EnsembleSpec& spec = path.spec();
  if (from < spec.m_left() || to > spec.n_right() || from > to) {
    fail(ErrorCode::OutOfRange, "area range outside window");
  }
  if (tilt.a() == 0.0) return 0.0;
  double total = 0.0;
  double prefactor = tilt.a();
  for (int i = 0; i < path.n(); ++i) {
    double row = 0.0;
    for (int j = from; j < to; ++j) row += tilt.potential()(path(i, j));
    total += prefactor * row;
    prefactor *= tilt.b();
  }
  return total;
}

double area_functional(const PathConfig& path, const TiltSpec& tilt) {
  return area_functional(path, tilt, path.spec().m_left(), path.spec().n_right());
}

bool ordering_ok(const PathConfig& path) {
  const EnsembleSpec& spec = path.spec();
  for (int j = spec.m_left(); j <= spec.n_right(); ++j) {
    for (int i = 0; i + 1 < path.n(); ++i) {
      if (path(i, j) <= path(i + 1, j)) return false;
    }
    if (path(path.n() - 1, j) <= 0) return false;
  }
  return true;
}

double log_tilt_weight(const PathConfig& path, const TiltSpec& tilt) {
  if (!ordering_ok(path)) return kLogZero;
  return -area_functional(path, tilt);
}

// ---------------------------------------------------------------------------
// Rescaling

RescaledPath::RescaledPath(std::vector<double> times, std::vector<double> values, int n)
    : times_(std::move(times)), values_(std::move(values)), n_(n) {
  if (n_ < 1 || times_.size() < 2 ||
      values_.size() != times_.size() * static_cast<std::size_t>(n_)) {
    fail(ErrorCode::InvalidArgument, "rescaled path dimensions");
  }
  for (std::size_t k = 1; k < times_.size(); ++k) {
    if (!(times_[k] > times_[k - 1])) fail(ErrorCode::InvalidArgument, "times must increase");
  }
}

double RescaledPath::operator()(int curve, double t) const {
  if (curve < 0 || curve >= n_) fail(ErrorCode::OutOfRange, "curve index");
  if (t < times_.front() || t > times_.back()) {
    fail(ErrorCode::OutOfRange, "evaluation time outside the rescaled window");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t k = it == times_.end() ? times_.size() - 1
                                     : static_cast<std::size_t>(it - times_.begin());
  if (k == 0) k = 1;
  const double t0 = times_[k - 1];
  const double t1 = times_[k];
  const double w = (t - t0) / (t1 - t0);
  return (1.0 - w) * grid_value(curve, k - 1) + w * grid_value(curve, k);
}

RescaledPath rescale(const PathConfig& path, const ScaleInfo& scale, double sigma) {
  const EnsembleSpec& spec = path.spec();
  const std::size_t len = static_cast<std::size_t>(spec.length());
  std::vector<double> times(len);
  std::vector<double> values(len * static_cast<std::size_t>(spec.n()));
  const double time_unit = scale.h_small * scale.h_small;
  const double space_unit = scale.h_small / sigma;
  for (std::size_t k = 0; k < len; ++k) {
    const int j = spec.m_left() + static_cast<int>(k);
    times[k] = time_unit * j;
    for (int i = 0; i < spec.n(); ++i) {
      values[static_cast<std::size_t>(i) * len + k] = space_unit * path(i, j);
    }
  }
  return RescaledPath(std::move(times), std::move(values), spec.n());
}

}  // namespace ensembles
