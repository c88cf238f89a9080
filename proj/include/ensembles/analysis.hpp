#pragma once

// Experiment drivers: mixing decay, invariance principle, convergence to the
// stationary polymer law, stochastic dominance, good-block statistics and the
// partition-function slope.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ensembles/brownian_oracle.hpp"
#include "ensembles/exact_engine.hpp"
#include "ensembles/gibbs_sampler.hpp"
#include "ensembles/model_core.hpp"

namespace ensembles {

/// Least-squares line through (x, log y) over the points with y > 1e-12.
struct LogLinearFit {
  double slope;
  double intercept;
  double r2;
  int points;
};

/// nullopt when fewer than two points survive the cut.
std::optional<LogLinearFit> fit_log_linear(std::span<const double> x, std::span<const double> y);

// ---- mixing ----

/// Two ensembles compared on the same central window. Both boundaries must be
/// of the same kind (walk or bridge). `extra_*` widens one window by that
/// many lattice steps on each side.
struct BoundaryPair {
  Boundary first;
  Boundary second;
  int extra_first = 0;
  int extra_second = 0;
};

struct MixingPoint {
  int k;
  double tv;
};

struct MixingReport {
  bool bridge = false;
  int t_lattice = 0;
  std::vector<MixingPoint> points;
  std::optional<LogLinearFit> fit;  // slope = -c2, intercept = log c1
  /// tv[i+1] < tv[i] for every consecutive pair (exact comparison).
  bool strictly_decreasing = false;
  /// Some tv rose above its predecessor by more than 1e-12.
  bool monotonicity_violated = false;
};

/// For each K, both ensembles live on [-(K + T), K + T] (plus their extra
/// width) with the cutoff of `base`; tv_exact is taken between their joint
/// laws on the times -T..T. Points are computed in parallel and reported in
/// the order of k_list.
MixingReport mixing_curve(const EnsembleSpec& base, const Kernel& kernel, const TiltSpec& tilt,
                          int t_lattice, std::vector<int> k_list, const BoundaryPair& pair,
                          int threads = 1);

// ---- one-dimensional marginals ----

/// pmf[k] is the mass at height k * unit.
struct Marginal1D {
  double unit;
  std::vector<double> pmf;
};

Marginal1D lattice_marginal(const Distribution& d, int curve, double unit);
Marginal1D oracle_marginal(const Distribution& d, int curve, double dx);

/// Mid-CDF of the lattice law at integer k (P(X < k) + P(X = k) / 2) and
/// the CDF of the oracle law with each atom spread uniformly over its cell.
double oracle_cdf(const Marginal1D& m, double x);
double lattice_sup_cdf_distance(const Marginal1D& lattice, const Marginal1D& oracle);

/// TV after spreading both laws uniformly over their cells (lattice cell
/// width period * unit, oracle cell width dx) and binning to width
/// max(period * lattice unit, dx), bins centered on supported lattice points.
double binned_tv(const Marginal1D& lattice, int period, const Marginal1D& oracle);

// ---- dominance ----

struct DominanceReport {
  bool pass;
  /// max over the grid of F_upper - F_lower (0 when ordered).
  double max_violation;
  /// max over the grid of F_lower - F_upper.
  double max_gap;
  std::size_t points;
};

/// PASS iff F_upper(x) <= F_lower(x) at every grid point, compared exactly.
/// CDFs are accumulated from the bottom while F_lower <= 1/2 and through
/// survival functions from the top otherwise. Throws GridMismatch when the
/// units differ.
DominanceReport dominance_check(const Marginal1D& lower, const Marginal1D& upper);

// ---- good blocks ----

struct BlockFlags {
  int ell;
  bool good_x;
  bool good_y;
  bool joint;
};

struct GoodBlockReport {
  double eta;
  double eps;
  int m_blocks;
  int m0 = 0;
  int m0_5 = 0;
  std::vector<BlockFlags> blocks;       // ell = -M..M-1, D = [2 ell, 2 ell + 2]
  std::vector<BlockFlags> five_blocks;  // ell = -floor(M/5)..floor(M/5)
};

/// x(l), x(l+1) regular (top <= eta, gaps >= eps, ordered above 0) and
/// max of x_1 over [l, l+1] <= 2 eta.
bool interval_regular(const RescaledPath& x, int ell, double eta, double eps);

/// Requires both paths to span [-2M, 2M]. A 5-block reaching outside a
/// path's range is not pre-good for that path.
GoodBlockReport good_blocks(const RescaledPath& x, const RescaledPath& y, double eta, double eps,
                            int m_blocks);

struct BlockStatPoint {
  int m;
  double mean_density;  // mean of M0 / (2M)
  double prob_below;    // P(M0 <= nu M)
};

struct BlockStatistics {
  double nu;
  std::size_t pairs;
  std::vector<BlockStatPoint> points;
  /// prob_below non-increasing in M and lower at the last M than the first.
  bool decreasing;
};

/// Pairs of independent MCMC samples (chains seeded with streams 0 and 1 of
/// params.seed); nu is half the mean density pooled over every M.
BlockStatistics good_block_statistics(std::shared_ptr<const EnsembleSpec> spec,
                                      const Kernel& kernel, const TiltSpec& tilt,
                                      const McmcParams& params, double eta, double eps,
                                      const std::vector<int>& m_list, int threads = 1);

// ---- invariance principle ----

struct InvarianceSetup {
  int n = 1;
  double m_cont = 1.0;
  /// Observation time; |t_obs| <= m_cont.
  double t_obs = 0.0;
  double a = 1.0;
  double b = 2.0;
  std::vector<double> u{1.0};
  /// Right boundary for the bridge version; empty means a free right end.
  std::optional<std::vector<double>> v;
  double dx = 0.05;
  double height_cap = 0.0;  // 0: GridSpec::default_cap
  /// Run the oracle from the rescaled lattice boundary h u_lattice / sigma
  /// (the sequence u_N -> u) instead of u itself.
  bool match_lattice_boundary = true;
};

struct InvariancePoint {
  double lambda;
  int half_width;  // L = ceil(lambda^(-2/3) m_cont)
  std::vector<int> u_lattice;
  double distance;
};

/// Linear potential only. For each lambda compares the rescaled lattice
/// marginal of x_1 at t_obs with the oracle marginal (tilt a * sigma).
std::vector<InvariancePoint> invariance_check(const InvarianceSetup& setup,
                                              const std::vector<double>& lambdas,
                                              const Kernel& kernel, int threads = 1);

/// round(H sigma u), raised where needed to stay strictly decreasing and >= 1.
std::vector<int> lattice_boundary(std::span<const double> u, double h_big, double sigma);

// ---- convergence to the stationary law ----

enum class BoundaryMode { Walk, Bridge };

struct ConvergenceSetup {
  int n = 1;
  double a = 1.0;
  double b = 2.0;
  BoundaryMode mode = BoundaryMode::Walk;
  /// Lattice boundary heights (both ends for bridges).
  std::vector<int> u{1};
  /// Lattice half-width N for a given lambda; default round(1 / lambda).
  std::function<int(double)> n_rule;
  double dx = 0.05;
  double height_cap = 0.0;
  McmcParams mcmc;  // used when the exact engine exceeds the budget
  std::size_t budget = 0;  // lattice engine budget; 0 means default_budget()
};

struct ConvergencePoint {
  double lambda;
  int half_width;
  double tv;
  bool exact;
};

/// N = round(1 / lambda), at least 1.
int inverse_lambda_rule(double lambda);
/// N = ceil(1 / lambda).
int inverse_lambda_ceil_rule(double lambda);

std::vector<ConvergencePoint> convergence_to_mu(const ConvergenceSetup& setup,
                                                const std::vector<double>& lambdas,
                                                const Kernel& kernel, int threads = 1);

// ---- partition-function slope ----

struct SlopePoint {
  double t;
  int steps;  // lattice window [-steps, steps]
  double log_z;
};

struct SlopeReport {
  std::vector<SlopePoint> points;
  std::vector<double> local_slopes;
  double slope = 0.0;      // last local slope
  double intercept = 0.0;  // min over points of log Z - slope T
  double max_slope_change = 0.0;
  bool stable = false;  // last two local slopes within 10%
  bool pass = false;
};

/// log Z of the walk started at w on [-round(H^2 T), round(H^2 T)] for each T
/// (strictly increasing, distinct lattice windows). Requires w_1 h <= eta.
/// x_max <= 0 selects default_x_max.
SlopeReport log_partition_slope(const std::vector<int>& w, const Kernel& kernel,
                                const TiltSpec& tilt, const std::vector<double>& t_list,
                                double eta, int x_max = 0, int threads = 1);

}  // namespace ensembles
