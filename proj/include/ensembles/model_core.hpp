#pragma once

// Model primitives: step kernels, potentials, area tilts, ensemble windows and
// boundary data, path configurations, and the diffusive rescaling.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ensembles/common.hpp"

namespace ensembles {

/// Finite-support integer step distribution with zero mean whose support
/// generates Z. Offsets are stored in increasing order.
class Kernel {
 public:
  /// Validates and builds a kernel. Throws NotNormalized, NonzeroMean,
  /// NotIrreducible, or InvalidArgument (length mismatch, nonpositive or
  /// duplicate entries).
  static Kernel make(std::vector<int> offsets, std::vector<double> probs);

  static Kernel simple_walk() { return make({-1, 1}, {0.5, 0.5}); }
  static Kernel lazy_walk() { return make({-1, 0, 1}, {0.25, 0.5, 0.25}); }

  std::span<const int> offsets() const { return offsets_; }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> log_probs() const { return log_probs_; }
  std::size_t support_size() const { return offsets_.size(); }

  double variance() const { return variance_; }
  double sigma() const;
  /// gcd of pairwise support differences; 2 for the simple walk.
  int period() const { return period_; }
  int max_step() const { return max_step_; }

  /// log p_z, or log(0) when z is outside the support.
  double log_prob(int z) const;

 private:
  Kernel() = default;
  std::vector<int> offsets_;
  std::vector<double> probs_;
  std::vector<double> log_probs_;
  double variance_ = 0.0;
  int period_ = 1;
  int max_step_ = 0;
};

/// Family of potentials V_lambda. Linear is V(x) = lambda * x. Table is
/// V(x) = lambda * g(x), with g given by samples (x_k, g_k), x_0 = 0, g_0 = 0,
/// evaluated by linear interpolation and extrapolated linearly past the last
/// sample.
class Potential {
 public:
  enum class Kind { Linear, Table };

  static Potential linear(double lambda);
  static Potential table(std::vector<double> xs, std::vector<double> base_values,
                         double lambda);

  Kind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double operator()(double x) const;

  /// Same shape with a different lambda.
  Potential with_lambda(double lambda) const;

  /// Optional lower-bound function q0(r) attached for reporting only.
  Potential with_q0(std::function<double(double)> q0) const;
  const std::function<double(double)>& q0() const { return q0_; }

  std::span<const double> table_xs() const { return xs_; }
  std::span<const double> table_values() const { return gs_; }

 private:
  Potential() = default;
  Kind kind_ = Kind::Linear;
  double lambda_ = 1.0;
  std::vector<double> xs_;
  std::vector<double> gs_;
  std::function<double(double)> q0_;
};

/// Area tilt exp(-a * sum_i b^(i-1) * sum_j V(X_i(j))).
class TiltSpec {
 public:
  /// Requires a > 0 and b > 1.
  static TiltSpec make(double a, double b, Potential potential);
  /// a = 0: the untilted reference measure (ordering constraint only).
  static TiltSpec zero_tilt(double b, Potential potential);

  double a() const { return a_; }
  double b() const { return b_; }
  const Potential& potential() const { return potential_; }

  /// a * b^(curve) * V(x) for 0-based curve index.
  double site_cost(int curve, double x) const;

  TiltSpec with_a(double a) const;
  TiltSpec with_lambda(double lambda) const;

 private:
  TiltSpec(double a, double b, Potential potential)
      : a_(a), b_(b), potential_(std::move(potential)) {}
  double a_;
  double b_;
  Potential potential_;
};

struct WalkBoundary {
  std::vector<int> u;
};

struct BridgeBoundary {
  std::vector<int> u;
  std::vector<int> v;
};

using Boundary = std::variant<WalkBoundary, BridgeBoundary>;

/// n curves on the integer window {m_left, ..., n_right} with walk or bridge
/// boundary data and a height cutoff x_max.
class EnsembleSpec {
 public:
  static EnsembleSpec make(int n, int m_left, int n_right, Boundary boundary, int x_max);

  int n() const { return n_; }
  int m_left() const { return m_left_; }
  int n_right() const { return n_right_; }
  int length() const { return n_right_ - m_left_ + 1; }
  int steps() const { return n_right_ - m_left_; }
  int x_max() const { return x_max_; }

  const Boundary& boundary() const { return boundary_; }
  bool is_bridge() const { return std::holds_alternative<BridgeBoundary>(boundary_); }
  const std::vector<int>& u() const;
  /// Right boundary for bridges, nullptr for walks.
  const std::vector<int>* v() const;

  bool contains_time(int t) const { return t >= m_left_ && t <= n_right_; }

  EnsembleSpec with_x_max(int x_max) const;
  EnsembleSpec with_window(int m_left, int n_right) const;
  EnsembleSpec with_boundary(Boundary boundary) const;

 private:
  EnsembleSpec() = default;
  int n_ = 1;
  int m_left_ = 0;
  int n_right_ = 1;
  Boundary boundary_;
  int x_max_ = 1;
};

/// Default cutoff ceil(x30 + max boundary height + 5) where V(x30) = 30
/// (x30 = 30 / lambda for the linear potential).
int default_x_max(const TiltSpec& tilt, const Boundary& boundary);

/// Integer heights X_i(j), curve-major. Boundary columns always match the
/// spec's boundary data.
class PathConfig {
 public:
  PathConfig(std::shared_ptr<const EnsembleSpec> spec, std::vector<int> heights);

  const EnsembleSpec& spec() const { return *spec_; }
  const std::shared_ptr<const EnsembleSpec>& spec_ptr() const { return spec_; }

  int n() const { return spec_->n(); }
  int length() const { return spec_->length(); }

  /// Height of 0-based curve at absolute time t.
  int operator()(int curve, int t) const {
    return heights_[static_cast<std::size_t>(curve) * static_cast<std::size_t>(length()) +
                    static_cast<std::size_t>(t - spec_->m_left())];
  }
  std::vector<int> column(int t) const;

  /// Overwrites column t. Pinned boundary columns cannot be changed.
  void set_column(int t, std::span<const int> values);

  std::span<const int> heights() const { return heights_; }

  friend bool operator==(const PathConfig& a, const PathConfig& b) {
    return a.heights_ == b.heights_ && a.spec_->m_left() == b.spec_->m_left() &&
           a.spec_->n_right() == b.spec_->n_right();
  }

 private:
  std::shared_ptr<const EnsembleSpec> spec_;
  std::vector<int> heights_;
};

/// H solving H^2 V(H) = 1 and h = 1/H.
struct ScaleInfo {
  double lambda;
  double h_big;
  double h_small;
};

ScaleInfo h_scale(const Potential& potential);

/// min over r of H^2 V(r H) - q0(r); nullopt when no q0 is attached.
std::optional<double> q0_margin(const Potential& potential, std::span<const double> rs);

/// a * sum_i b^(i-1) * sum_{j=from}^{to-1} V(X_i(j)); defaults to the whole
/// window, which leaves out the last time index.
double area_functional(const PathConfig& path, const TiltSpec& tilt);
double area_functional(const PathConfig& path, const TiltSpec& tilt, int from, int to);

/// True iff every column is strictly decreasing with a positive last entry.
bool ordering_ok(const PathConfig& path);

/// -area when ordered, log(0) otherwise.
double log_tilt_weight(const PathConfig& path, const TiltSpec& tilt);

/// Piecewise-linear rescaled path: times h^2 * j, values h * X(j) / sigma.
class RescaledPath {
 public:
  RescaledPath(std::vector<double> times, std::vector<double> values, int n);

  int n() const { return n_; }
  std::size_t grid_size() const { return times_.size(); }
  std::span<const double> times() const { return times_; }
  double t_min() const { return times_.front(); }
  double t_max() const { return times_.back(); }

  double grid_value(int curve, std::size_t k) const {
    return values_[static_cast<std::size_t>(curve) * times_.size() + k];
  }

  /// Linear interpolant at t. Throws OutOfRange outside [t_min, t_max].
  double operator()(int curve, double t) const;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  int n_;
};

RescaledPath rescale(const PathConfig& path, const ScaleInfo& scale, double sigma = 1.0);

}  // namespace ensembles
