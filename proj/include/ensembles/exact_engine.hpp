#pragma once

// Exact transfer-operator computations on the truncated Weyl chamber:
// partition functions, marginals, restricted joint laws, conditional bridge
// laws and forward-filter backward-sampling.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensembles/common.hpp"
#include "ensembles/model_core.hpp"
#include "ensembles/rng.hpp"

namespace ensembles {

/// Strictly decreasing n-tuples in {1, ..., x_max}, ordered lexicographically
/// (first coordinate most significant). The id of a tuple s is its colex rank
/// sum_i C(s_i - 1, n - i), which coincides with that order.
class StateSpace {
 public:
  static std::shared_ptr<const StateSpace> enumerate(int n, int x_max,
                                                     std::size_t budget = default_budget());

  int n() const { return n_; }
  int x_max() const { return x_max_; }
  std::size_t size() const { return size_; }

  std::span<const int> state(std::size_t id) const {
    return {flat_.data() + id * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_)};
  }
  /// Top coordinate of state id.
  int top(std::size_t id) const { return flat_[id * static_cast<std::size_t>(n_)]; }

  /// Id of the tuple, or nullopt if it is not a state of this space.
  std::optional<std::size_t> index_of(std::span<const int> tuple) const;

  bool same_as(const StateSpace& other) const {
    return n_ == other.n_ && x_max_ == other.x_max_;
  }

 private:
  StateSpace() = default;
  int n_ = 1;
  int x_max_ = 1;
  std::size_t size_ = 0;
  std::vector<int> flat_;
  std::vector<std::vector<std::uint64_t>> binom_;  // binom_[k][m] = C(m, k)
};

/// Number of strictly decreasing n-tuples in {1..x_max}, saturating at
/// SIZE_MAX.
std::size_t chamber_size(int n, int x_max);

/// One step of the tilted chain in log space:
/// log T(s -> s') = sum_i log p(s'_i - s_i) - a sum_i b^(i-1) V(s_i).
/// The tilt is charged at the source. Stored row-wise (by source) and
/// column-wise (by target).
class TransferStep {
 public:
  static std::shared_ptr<const TransferStep> build(std::shared_ptr<const StateSpace> space,
                                                   const Kernel& kernel, const TiltSpec& tilt,
                                                   std::size_t budget = default_budget());

  const StateSpace& space() const { return *space_; }
  const std::shared_ptr<const StateSpace>& space_ptr() const { return space_; }
  std::size_t size() const { return space_->size(); }
  std::size_t nonzeros() const { return row_targets_.size(); }

  std::span<const std::uint32_t> row_targets(std::size_t s) const {
    return {row_targets_.data() + row_ptr_[s], row_ptr_[s + 1] - row_ptr_[s]};
  }
  std::span<const double> row_log_values(std::size_t s) const {
    return {row_values_.data() + row_ptr_[s], row_ptr_[s + 1] - row_ptr_[s]};
  }

  /// log T(s -> t); log(0) when the move is not admissible.
  double log_entry(std::size_t s, std::size_t t) const;
  /// -a sum_i b^(i-1) V(s_i).
  double source_log_tilt(std::size_t s) const { return source_tilt_[s]; }

  /// out(t) = logsumexp_s in(s) + log T(s -> t).
  void forward(std::span<const double> in, std::span<double> out) const;
  /// out(s) = logsumexp_t log T(s -> t) + in(t).
  void backward(std::span<const double> in, std::span<double> out) const;

 private:
  TransferStep() = default;
  std::shared_ptr<const StateSpace> space_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> row_targets_;
  std::vector<double> row_values_;
  std::vector<std::size_t> col_ptr_;
  std::vector<std::uint32_t> col_sources_;
  std::vector<double> col_values_;
  std::vector<double> source_tilt_;
};

/// Finite probability vector over the product of `arity` copies of a state
/// space; entry index has the first factor most significant. Arity 0 is the
/// one-point law.
class Distribution {
 public:
  Distribution(std::shared_ptr<const StateSpace> space, int arity, std::vector<double> log_weights);

  const StateSpace& space() const { return *space_; }
  const std::shared_ptr<const StateSpace>& space_ptr() const { return space_; }
  int arity() const { return arity_; }
  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> log_weights() const { return log_weights_; }
  /// logsumexp of the weights as supplied (before normalization).
  double log_norm() const { return log_norm_; }

  /// State ids of the factors of entry `index`.
  std::vector<std::size_t> decode(std::size_t index) const;

  /// Law of the factors listed in `keep` (strictly increasing positions).
  Distribution marginalize(std::span<const int> keep) const;

  /// pmf over heights 0..x_max of coordinate `curve` of factor `position`.
  std::vector<double> coordinate_pmf(int position, int curve) const;

 private:
  std::shared_ptr<const StateSpace> space_;
  int arity_;
  std::vector<double> log_weights_;
  std::vector<double> probs_;
  double log_norm_ = kLogZero;
};

/// (1/2) sum |p - q|. Throws SpaceMismatch unless both live on the same
/// product space.
double tv_exact(const Distribution& p, const Distribution& q);

struct TransferResult {
  std::shared_ptr<const StateSpace> space;
  int m_left = 0;
  double log_z = kLogZero;
  /// forward[k] is the log forward vector at time m_left + k: tilted mass of
  /// paths from u arriving there.
  std::vector<std::vector<double>> forward;
  /// backward[k]: tilted mass of continuations from time m_left + k to the
  /// right boundary (0 at the free end of a walk).
  std::vector<std::vector<double>> backward;
  std::vector<std::string> warnings;

  /// logsumexp(forward + backward) at absolute time t.
  double log_z_at(int t) const;
};

/// Law of X on {K+1, ..., L-1} given X(K), X(L). `diagnostic_tv` compares the
/// direct bridge law with the law obtained by conditioning the global measure;
/// `enumerated` tells whether the latter came from explicit path enumeration
/// (true) or from forward-backward slices (too many paths to enumerate).
struct ConditionalLaw {
  Distribution law;
  double diagnostic_tv;
  bool enumerated;
};

/// Forward-backward engine for one ensemble. All messages are computed on
/// construction.
class ExactEngine {
 public:
  ExactEngine(EnsembleSpec spec, Kernel kernel, TiltSpec tilt,
              std::size_t budget = default_budget());

  const EnsembleSpec& spec() const { return *spec_; }
  const std::shared_ptr<const EnsembleSpec>& spec_ptr() const { return spec_; }
  const Kernel& kernel() const { return kernel_; }
  const TiltSpec& tilt() const { return tilt_; }
  const TransferStep& step() const { return *step_; }
  const TransferResult& result() const { return result_; }
  double log_z() const { return result_.log_z; }

  Distribution marginal(int t) const;
  /// Joint law at the given distinct times (any order; sorted internally).
  Distribution law_restricted(std::vector<int> times) const;

  ConditionalLaw conditional_bridge_law(int k, int l, std::span<const int> at_k,
                                        std::span<const int> at_l) const;

  /// count i.i.d. exact samples; sample i uses Rng::stream(seed, i).
  std::vector<PathConfig> sample(std::uint64_t seed, std::size_t count, int threads = 1) const;
  PathConfig sample_one(Rng& rng) const;

 private:
  std::vector<double> propagate(std::size_t from, int steps) const;
  std::shared_ptr<const EnsembleSpec> spec_;
  Kernel kernel_;
  TiltSpec tilt_;
  std::size_t budget_;
  std::shared_ptr<const TransferStep> step_;
  TransferResult result_;
};

// Thin wrappers named after the operations they perform.
TransferResult partition_bridge(const EnsembleSpec& spec, const Kernel& kernel,
                                const TiltSpec& tilt);
TransferResult partition_walk(const EnsembleSpec& spec, const Kernel& kernel, const TiltSpec& tilt);

/// Backward messages over `steps` steps: beta[steps] is the point mass at
/// `terminal` (or all zeros when terminal is nullopt, i.e. a free end) and
/// beta[k] = backward(beta[k + 1]).
std::vector<std::vector<double>> backward_messages(const TransferStep& step, int steps,
                                                   std::optional<std::size_t> terminal);

/// Draws a path of length steps + 1 starting at `start` from the chain with
/// transition weights T(s -> s') exp(beta[k + 1](s')). Returns state ids.
std::vector<std::size_t> sample_forward(const TransferStep& step, std::size_t start,
                                        const std::vector<std::vector<double>>& beta, Rng& rng);

}  // namespace ensembles
