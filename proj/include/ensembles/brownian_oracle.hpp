#pragma once

// Discretized Brownian polymer: n ordered Brownian paths above 0 on [-M, M]
// with area tilt exp(-a sum_i b^(i-1) int x_i dt), on the grid x = k dx,
// k = 1..K, with time step dt = dx^2. One step moves each coordinate by d grid
// units with weight exp(-d^2 / 2), |d| <= 8, normalized over all d. Paths
// leaving the chamber (ordering, wall, cap) are killed.

#include <memory>
#include <optional>
#include <vector>

#include "ensembles/common.hpp"
#include "ensembles/exact_engine.hpp"

namespace ensembles {

struct GridSpec {
  double dx;
  double height_cap;
  /// Time half-width M; the grid uses round(2M / dt) steps.
  double m;

  /// Validates dx > 0, cap >= 2 dx, m > 0 and a nonzero step count.
  static GridSpec make(double dx, double height_cap, double m);
  double dt() const { return dx * dx; }
  int heights() const;  // K = floor(cap / dx + 1e-9)
  int steps() const;    // round(2M / dt)

  /// 30/a + 5 + (3/a)(n - 1).
  static double default_cap(int n, double a);
};

struct PolymerBoundary {
  enum class Kind { ZeroBC, Fixed, FreeRight, FreeBoth };
  Kind kind = Kind::ZeroBC;
  /// Fixed: heights at -M; optional heights at +M (free right end when empty).
  std::vector<double> u;
  std::optional<std::vector<double>> v;
  /// FreeRight: law of the left end over the chamber; when empty the left end
  /// is the lowest chamber point dx (n, ..., 1).
  std::optional<Distribution> start;

  static PolymerBoundary zero() { return {}; }
  static PolymerBoundary fixed(std::vector<double> u, std::optional<std::vector<double>> v = {});
  static PolymerBoundary free_right(std::optional<Distribution> start = {});
  static PolymerBoundary free_both();
};

/// Box-shaped operator data shared by every computation on one grid.
class PolymerChamber {
 public:
  PolymerChamber(int n, double a, double b, const GridSpec& grid,
                 std::size_t budget = default_budget());

  int n() const { return n_; }
  int heights() const { return k_; }
  const GridSpec& grid() const { return grid_; }
  std::size_t box_size() const { return box_; }
  const std::shared_ptr<const StateSpace>& space() const { return space_; }

  /// One forward step: out = mask * conv(g * in).
  void forward(std::vector<double>& vec) const;
  /// One backward step: out = g * mask * conv(in).
  void backward(std::vector<double>& vec) const;
  /// Symmetrized step sqrt(g) conv sqrt(g) restricted to the chamber.
  void symmetric(std::vector<double>& vec) const;

  /// Box index of a chamber point given in grid units, or nullopt.
  std::optional<std::size_t> box_index(const std::vector<int>& k) const;
  /// Box index of physical heights rounded to the grid. Throws
  /// InvalidArgument when the point is not in the chamber.
  std::size_t locate(const std::vector<double>& heights) const;
  std::vector<double> chamber_indicator() const;

  /// Probability vector on the chamber (box layout) -> Distribution on the
  /// StateSpace(n, K).
  Distribution to_distribution(const std::vector<double>& box_weights) const;
  std::vector<double> from_distribution(const Distribution& d) const;

 private:
  void convolve(std::vector<double>& vec) const;
  int n_;
  int k_;
  GridSpec grid_;
  std::size_t box_;
  std::vector<double> taps_;  // weights for d = -8..8
  std::vector<double> g_;
  std::vector<double> sqrt_g_;
  std::vector<unsigned char> mask_;
  std::vector<std::size_t> box_to_state_;
  std::shared_ptr<const StateSpace> space_;
  mutable std::vector<double> scratch_;
};

/// One-time marginal at time t in [-M, M] (rounded to the grid).
Distribution polymer_marginal(const PolymerChamber& chamber, const PolymerBoundary& boundary,
                              double t);
Distribution polymer_marginal(int n, double a, double b, const GridSpec& grid,
                              const PolymerBoundary& boundary, double t);

Distribution free_marginal(const PolymerChamber& chamber, PolymerBoundary::Kind mode, double t);

struct ZeroBcReport {
  Distribution law;       // epsilon = dx, direction w = (n, ..., 1)
  double tv_coarse;       // TV(eps = 4dx, eps = 2dx)
  double tv_fine;         // TV(eps = 2dx, eps = dx)
  double direction_tv;    // TV(w, w') at eps = dx, w' = (n+1, n-1, ..., 1)
};

/// t = 0 marginal of Fixed(eps w, eps w) for eps in {4dx, 2dx, dx}.
ZeroBcReport zero_bc_extrapolate(const PolymerChamber& chamber);

struct StationaryResult {
  Distribution density;
  double eigenvalue;
  int iterations;
};

/// Leading eigenvector of the tilted one-step chamber operator by power
/// iteration (tolerance 1e-12, at most 1e5 iterations). The one-time
/// stationary law is the square of the symmetrized eigenvector. Throws
/// NoConvergence.
StationaryResult stationary_density(const PolymerChamber& chamber, double tol = 1e-12,
                                    int max_iter = 100000);

/// Per-height pmf of coordinate `curve` of a one-time oracle law, index k is
/// height k dx (k = 0 is always 0).
std::vector<double> oracle_coordinate_pmf(const Distribution& d, int curve);

}  // namespace ensembles
