#pragma once

// Heat-bath block sampler for the tilted ensemble. Each block interior is
// redrawn exactly from its conditional bridge (or free-end walk) law.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ensembles/exact_engine.hpp"
#include "ensembles/model_core.hpp"
#include "ensembles/rng.hpp"

namespace ensembles {

struct McmcParams {
  int block_len = 8;
  int overlap = 4;
  int sweeps = 1000;
  int burn_in = 100;
  int thin = 1;
  std::uint64_t seed = 0;
  /// Independent chains; chain c uses Rng::stream(seed, c).
  int chains = 1;

  /// Throws InvalidArgument on block_len < 2, overlap outside [1, block_len),
  /// thin < 1, negative sweeps/burn_in, chains < 1.
  void validate() const;
};

struct ChainDiagnostics {
  /// Integrated autocorrelation times of x_1 at the window center and of the
  /// total area, averaged over chains; empty when the series is too short or
  /// constant.
  std::optional<double> tau_top;
  std::optional<double> tau_area;
  double acceptance = 1.0;
  std::size_t samples = 0;
  double seconds_per_sweep = 0.0;
};

/// Resamples blocks of one configuration. Keeps one transfer step per local
/// cutoff, so a sampler belongs to one chain at a time.
class BlockSampler {
 public:
  BlockSampler(std::shared_ptr<const EnsembleSpec> spec, Kernel kernel, TiltSpec tilt,
               std::size_t budget = default_budget());

  const EnsembleSpec& spec() const { return *spec_; }

  /// Redraws X on {K+1, ..., L-1} given X(K), X(L). For walks L may be
  /// n_right + 1, meaning {K+1, ..., n_right} with a free right end.
  void resample_block(PathConfig& config, int k, int l, Rng& rng);

  /// Left-to-right pass of blocks [K, K + block_len] with stride
  /// block_len - overlap; the last block of a walk has a free right end.
  void sweep(PathConfig& config, const McmcParams& params, Rng& rng);

 private:
  const TransferStep& step_for(int cutoff);
  std::shared_ptr<const EnsembleSpec> spec_;
  Kernel kernel_;
  TiltSpec tilt_;
  std::size_t budget_;
  std::map<int, std::shared_ptr<const TransferStep>> steps_;
};

/// A positive-probability starting configuration: one exact draw from the
/// untilted ensemble on a small cutoff (doubled until feasible, at most
/// x_max). Throws Infeasible when no admissible path exists.
PathConfig init_config(std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel, Rng& rng);

/// Runs one chain and calls `emit(config)` for every kept sample (after
/// burn_in, every thin-th sweep). Returns seconds spent per sweep.
double run_chain(std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel,
                 const TiltSpec& tilt, const McmcParams& params, int chain,
                 const std::function<void(const PathConfig&)>& emit);

/// All chains, concatenated in chain order.
std::pair<std::vector<PathConfig>, ChainDiagnostics> sample_paths(
    std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel, const TiltSpec& tilt,
    const McmcParams& params, int threads = 1);

/// Integrated autocorrelation time tau = 1/2 + sum_{t=1}^{W} rho(t) with the
/// smallest window W satisfying W >= 5 tau(W). Throws TooShort on series
/// shorter than 10 or with zero variance.
double autocorr(std::span<const double> series);

/// Observable used in the diagnostics: x_1 at the window center.
double top_at_center(const PathConfig& config);

}  // namespace ensembles
