#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ensembles/exact_engine.hpp"

namespace ensembles {

namespace {

// logsumexp over a sparse slice, two passes (max, then sum).
template <typename Index>
double slice_lse(std::span<const Index> idx, std::span<const double> vals,
                 std::span<const double> vec) {
  double peak = kLogZero;
  for (std::size_t k = 0; k < idx.size(); ++k) peak = std::max(peak, vec[idx[k]] + vals[k]);
  if (is_log_zero(peak)) return kLogZero;
  double sum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double x = vec[idx[k]];
    if (!is_log_zero(x)) sum += std::exp(x + vals[k] - peak);
  }
  return peak + std::log(sum);
}

}  // namespace

std::shared_ptr<const TransferStep> TransferStep::build(std::shared_ptr<const StateSpace> space,
                                                        const Kernel& kernel, const TiltSpec& tilt,
                                                        std::size_t budget) {
  const int n = space->n();
  const std::size_t states = space->size();
  if (states >= std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::TooLarge, "exact_engine", "state space too large for 32-bit ids");
  }
  long double bound = static_cast<long double>(states);
  for (int i = 0; i < n; ++i) bound *= static_cast<long double>(kernel.support_size());
  if (bound > static_cast<long double>(budget)) {
    throw Error(ErrorCode::TooLarge, "exact_engine",
                "transfer matrix bound of " + std::to_string(static_cast<double>(bound)) +
                    " entries exceeds budget " + std::to_string(budget));
  }

  auto step = std::shared_ptr<TransferStep>(new TransferStep());
  step->space_ = space;
  step->source_tilt_.resize(states);
  step->row_ptr_.assign(states + 1, 0);

  const auto offsets = kernel.offsets();
  const auto log_p = kernel.log_probs();
  const std::size_t support = offsets.size();
  std::vector<std::size_t> digit(static_cast<std::size_t>(n));
  std::vector<int> target(static_cast<std::size_t>(n));
  std::vector<std::pair<std::uint32_t, double>> row;

  for (std::size_t s = 0; s < states; ++s) {
    const auto src = space->state(s);
    double tilt_cost = 0.0;
    for (int i = 0; i < n; ++i) tilt_cost += tilt.site_cost(i, src[static_cast<std::size_t>(i)]);
    step->source_tilt_[s] = -tilt_cost;

    row.clear();
    std::fill(digit.begin(), digit.end(), 0);
    for (;;) {
      double lp = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::size_t d = digit[static_cast<std::size_t>(i)];
        target[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(i)] + offsets[d];
        lp += log_p[d];
      }
      if (auto id = space->index_of(target)) {
        row.emplace_back(static_cast<std::uint32_t>(*id), lp - tilt_cost);
      }
      int pos = n - 1;
      while (pos >= 0 && ++digit[static_cast<std::size_t>(pos)] == support) {
        digit[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
    std::sort(row.begin(), row.end());
    for (const auto& [t, v] : row) {
      step->row_targets_.push_back(t);
      step->row_values_.push_back(v);
    }
    step->row_ptr_[s + 1] = step->row_targets_.size();
  }

  // Column-wise copy for the gather in forward().
  step->col_ptr_.assign(states + 1, 0);
  for (std::uint32_t t : step->row_targets_) ++step->col_ptr_[t + 1];
  std::partial_sum(step->col_ptr_.begin(), step->col_ptr_.end(), step->col_ptr_.begin());
  step->col_sources_.resize(step->row_targets_.size());
  step->col_values_.resize(step->row_targets_.size());
  std::vector<std::size_t> cursor(step->col_ptr_.begin(), step->col_ptr_.end() - 1);
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t k = step->row_ptr_[s]; k < step->row_ptr_[s + 1]; ++k) {
      const std::size_t slot = cursor[step->row_targets_[k]]++;
      step->col_sources_[slot] = static_cast<std::uint32_t>(s);
      step->col_values_[slot] = step->row_values_[k];
    }
  }
  return step;
}

double TransferStep::log_entry(std::size_t s, std::size_t t) const {
  const auto targets = row_targets(s);
  const auto it = std::lower_bound(targets.begin(), targets.end(), static_cast<std::uint32_t>(t));
  if (it == targets.end() || *it != t) return kLogZero;
  return row_log_values(s)[static_cast<std::size_t>(it - targets.begin())];
}

void TransferStep::forward(std::span<const double> in, std::span<double> out) const {
  const std::size_t states = size();
  for (std::size_t t = 0; t < states; ++t) {
    const std::size_t lo = col_ptr_[t];
    const std::size_t len = col_ptr_[t + 1] - lo;
    out[t] = slice_lse<std::uint32_t>({col_sources_.data() + lo, len},
                                      {col_values_.data() + lo, len}, in);
  }
}

void TransferStep::backward(std::span<const double> in, std::span<double> out) const {
  const std::size_t states = size();
  for (std::size_t s = 0; s < states; ++s) {
    out[s] = slice_lse<std::uint32_t>(row_targets(s), row_log_values(s), in);
  }
}

std::vector<std::vector<double>> backward_messages(const TransferStep& step, int steps,
                                                   std::optional<std::size_t> terminal) {
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(steps) + 1,
                                        std::vector<double>(step.size(), kLogZero));
  auto& last = beta.back();
  if (terminal) {
    last[*terminal] = 0.0;
  } else {
    std::fill(last.begin(), last.end(), 0.0);
  }
  for (int k = steps - 1; k >= 0; --k) {
    step.backward(beta[static_cast<std::size_t>(k) + 1], beta[static_cast<std::size_t>(k)]);
  }
  return beta;
}

std::vector<std::size_t> sample_forward(const TransferStep& step, std::size_t start,
                                        const std::vector<std::vector<double>>& beta, Rng& rng) {
  const std::size_t steps = beta.size() - 1;
  std::vector<std::size_t> path(steps + 1);
  path[0] = start;
  std::vector<double> weights;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto targets = step.row_targets(path[k]);
    const auto values = step.row_log_values(path[k]);
    weights.resize(targets.size());
    bool any = false;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      weights[j] = values[j] + beta[k + 1][targets[j]];
      any = any || !is_log_zero(weights[j]);
    }
    if (!any) {
      throw Error(ErrorCode::Infeasible, "exact_engine", "no admissible continuation");
    }
    path[k + 1] = targets[rng.categorical_log(weights)];
  }
  return path;
}

}  // namespace ensembles
