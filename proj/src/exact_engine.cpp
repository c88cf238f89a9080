#include "ensembles/exact_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ensembles/parallel.hpp"

namespace ensembles {

namespace {

constexpr std::string_view kModule = "exact_engine";
constexpr double kCutoffMass = 1e-8;
// log(1e-300)
constexpr double kLogTinyMass = -690.7755278982137;
// Path-enumeration nodes before conditional_bridge_law gives up on route (a).
constexpr std::size_t kEnumerationNodes = 5'000'000;

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

int positive_mod(long long x, int p) {
  const long long r = x % p;
  return static_cast<int>(r < 0 ? r + p : r);
}

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t budget) {
  long double total = 1.0L;
  for (std::size_t i = 0; i < exp; ++i) total *= static_cast<long double>(base);
  if (total > static_cast<long double>(budget)) {
    fail(ErrorCode::TooLarge, "joint law over " + std::to_string(exp) +
                                  " times has too many entries for the budget");
  }
  return static_cast<std::size_t>(total);
}

// Global admissible paths enumerated one by one, using only the kernel and the
// potential (no transfer matrix), keeping those that pass through `at_k` at
// time k and `at_l` at time l.
class PathEnumerator {
 public:
  PathEnumerator(const EnsembleSpec& spec, const Kernel& kernel, const TiltSpec& tilt,
                 const StateSpace& space, int k, int l, std::span<const int> at_k,
                 std::span<const int> at_l)
      : spec_(spec), kernel_(kernel), tilt_(tilt), space_(space), k_(k), l_(l),
        at_k_(at_k.begin(), at_k.end()), at_l_(at_l.begin(), at_l.end()),
        interior_(static_cast<std::size_t>(l - k - 1)) {
    std::size_t size = 1;
    for (int i = k + 1; i < l; ++i) size *= space.size();
    log_weights_.assign(size, kLogZero);
  }

  // False when the node budget ran out.
  bool run() {
    std::vector<int> start = spec_.u();
    return visit(spec_.m_left(), start, 0.0);
  }

  std::vector<double>& log_weights() { return log_weights_; }

 private:
  bool visit(int t, const std::vector<int>& state, double logw) {
    if (++nodes_ > kEnumerationNodes) return false;
    if (t == k_ && state != at_k_) return true;
    if (t == l_ && state != at_l_) return true;
    if (t > k_ && t < l_) interior_[static_cast<std::size_t>(t - k_ - 1)] = state;
    if (t == spec_.n_right()) {
      if (const auto* v = spec_.v(); v != nullptr && state != *v) return true;
      std::size_t index = 0;
      for (const auto& col : interior_) index = index * space_.size() + *space_.index_of(col);
      log_weights_[index] = log_add_exp(log_weights_[index], logw);
      return true;
    }
    const int n = static_cast<int>(state.size());
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += tilt_.site_cost(i, state[static_cast<std::size_t>(i)]);

    const auto offsets = kernel_.offsets();
    const auto log_p = kernel_.log_probs();
    std::vector<std::size_t> digit(static_cast<std::size_t>(n), 0);
    std::vector<int> next(state.size());
    for (;;) {
      double lp = 0.0;
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        const std::size_t d = digit[static_cast<std::size_t>(i)];
        next[static_cast<std::size_t>(i)] = state[static_cast<std::size_t>(i)] + offsets[d];
        lp += log_p[d];
        if (next[static_cast<std::size_t>(i)] > spec_.x_max()) ok = false;
        if (i > 0 && next[static_cast<std::size_t>(i)] >= next[static_cast<std::size_t>(i) - 1]) {
          ok = false;
        }
      }
      if (next.back() < 1) ok = false;
      if (ok && !visit(t + 1, next, logw + lp - cost)) return false;
      int pos = n - 1;
      while (pos >= 0 && ++digit[static_cast<std::size_t>(pos)] == offsets.size()) {
        digit[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
    return true;
  }

  const EnsembleSpec& spec_;
  const Kernel& kernel_;
  const TiltSpec& tilt_;
  const StateSpace& space_;
  int k_;
  int l_;
  std::vector<int> at_k_;
  std::vector<int> at_l_;
  std::vector<std::vector<int>> interior_;
  std::vector<double> log_weights_;
  std::size_t nodes_ = 0;
};

}  // namespace

double TransferResult::log_z_at(int t) const {
  const auto& a = forward.at(static_cast<std::size_t>(t - m_left));
  const auto& b = backward.at(static_cast<std::size_t>(t - m_left));
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
  return log_sum_exp(sum);
}

ExactEngine::ExactEngine(EnsembleSpec spec, Kernel kernel, TiltSpec tilt, std::size_t budget)
    : spec_(std::make_shared<const EnsembleSpec>(std::move(spec))),
      kernel_(std::move(kernel)),
      tilt_(std::move(tilt)),
      budget_(budget) {
  auto space = StateSpace::enumerate(spec_->n(), spec_->x_max(), budget_);
  step_ = TransferStep::build(space, kernel_, tilt_, budget_);

  const int steps = spec_->steps();
  const std::size_t states = space->size();
  result_.space = space;
  result_.m_left = spec_->m_left();
  result_.forward.assign(static_cast<std::size_t>(steps) + 1,
                         std::vector<double>(states, kLogZero));
  result_.forward[0][*space->index_of(spec_->u())] = 0.0;
  for (int k = 0; k < steps; ++k) {
    step_->forward(result_.forward[static_cast<std::size_t>(k)],
                   result_.forward[static_cast<std::size_t>(k) + 1]);
  }

  std::optional<std::size_t> terminal;
  if (const auto* v = spec_->v()) terminal = *space->index_of(*v);
  result_.backward = backward_messages(*step_, steps, terminal);
  result_.log_z = terminal ? result_.forward.back()[*terminal] : log_sum_exp(result_.forward.back());

  if (is_log_zero(result_.log_z)) {
    if (const auto* v = spec_->v()) {
      const int p = kernel_.period();
      const int z0 = kernel_.offsets().front();
      for (int i = 0; i < spec_->n(); ++i) {
        const long long gap = static_cast<long long>((*v)[static_cast<std::size_t>(i)]) -
                              spec_->u()[static_cast<std::size_t>(i)] -
                              static_cast<long long>(steps) * z0;
        if (positive_mod(gap, p) != 0) {
          fail(ErrorCode::ParityInfeasible,
               "v - u incompatible with kernel period " + std::to_string(p) + " over " +
                   std::to_string(steps) + " steps");
        }
      }
    }
    fail(ErrorCode::Infeasible, "no admissible path within x_max");
  }

  // Mass near the cutoff, worst over all times.
  double worst = kLogZero;
  for (int k = 0; k <= steps; ++k) {
    const auto& a = result_.forward[static_cast<std::size_t>(k)];
    const auto& b = result_.backward[static_cast<std::size_t>(k)];
    double near = kLogZero;
    for (std::size_t s = 0; s < states; ++s) {
      if (space->top(s) >= spec_->x_max() - 2) near = log_add_exp(near, a[s] + b[s]);
    }
    worst = std::max(worst, near - result_.log_z);
  }
  if (worst > std::log(kCutoffMass)) {
    std::ostringstream os;
    os.precision(6);
    os << "CutoffDominated: mass " << std::exp(worst) << " within 2 of x_max="
       << spec_->x_max();
    result_.warnings.push_back(os.str());
  }
}

Distribution ExactEngine::marginal(int t) const {
  if (!spec_->contains_time(t)) fail(ErrorCode::OutOfRange, "time outside window");
  const auto k = static_cast<std::size_t>(t - spec_->m_left());
  std::vector<double> w(result_.forward[k].size());
  for (std::size_t s = 0; s < w.size(); ++s) w[s] = result_.forward[k][s] + result_.backward[k][s];
  return Distribution(result_.space, 1, std::move(w));
}

std::vector<double> ExactEngine::propagate(std::size_t from, int steps) const {
  std::vector<double> cur(step_->size(), kLogZero);
  if (steps == 1) {
    const auto targets = step_->row_targets(from);
    const auto values = step_->row_log_values(from);
    for (std::size_t j = 0; j < targets.size(); ++j) cur[targets[j]] = values[j];
    return cur;
  }
  cur[from] = 0.0;
  std::vector<double> next(cur.size());
  for (int k = 0; k < steps; ++k) {
    step_->forward(cur, next);
    cur.swap(next);
  }
  return cur;
}

Distribution ExactEngine::law_restricted(std::vector<int> times) const {
  std::sort(times.begin(), times.end());
  if (std::adjacent_find(times.begin(), times.end()) != times.end()) {
    fail(ErrorCode::InvalidArgument, "times must be distinct");
  }
  for (int t : times) {
    if (!spec_->contains_time(t)) fail(ErrorCode::OutOfRange, "time outside window");
  }
  const std::size_t states = step_->size();
  const std::size_t total = checked_power(states, times.size(), budget_);
  if (times.empty()) return Distribution(result_.space, 0, {0.0});

  const auto offset = [&](int t) { return static_cast<std::size_t>(t - spec_->m_left()); };
  std::vector<double> w = result_.forward[offset(times.front())];
  for (std::size_t j = 1; j < times.size(); ++j) {
    const int gap = times[j] - times[j - 1];
    // Dense gap kernel G(s, s') for this pair of times.
    std::vector<double> g(states * states);
    for (std::size_t s = 0; s < states; ++s) {
      const auto row = propagate(s, gap);
      std::copy(row.begin(), row.end(), g.begin() + static_cast<std::ptrdiff_t>(s * states));
    }
    std::vector<double> next(w.size() * states, kLogZero);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (is_log_zero(w[i])) continue;
      const std::size_t last = i % states;
      for (std::size_t s = 0; s < states; ++s) next[i * states + s] = w[i] + g[last * states + s];
    }
    w.swap(next);
  }
  const auto& beta = result_.backward[offset(times.back())];
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += beta[i % states];
  (void)total;
  return Distribution(result_.space, static_cast<int>(times.size()), std::move(w));
}

ConditionalLaw ExactEngine::conditional_bridge_law(int k, int l, std::span<const int> at_k,
                                                   std::span<const int> at_l) const {
  if (!(spec_->m_left() <= k && k < l && l <= spec_->n_right())) {
    fail(ErrorCode::OutOfRange, "need m_left <= K < L <= n_right");
  }
  const auto& space = *result_.space;
  const auto ia = space.index_of(at_k);
  const auto ib = space.index_of(at_l);
  if (!ia || !ib) fail(ErrorCode::ZeroProbabilityEndpoint, "endpoint outside the chamber");
  const double log_mass = result_.forward[static_cast<std::size_t>(k - spec_->m_left())][*ia] +
                          propagate(*ia, l - k)[*ib] +
                          result_.backward[static_cast<std::size_t>(l - spec_->m_left())][*ib] -
                          result_.log_z;
  if (!(log_mass >= kLogTinyMass)) {
    fail(ErrorCode::ZeroProbabilityEndpoint, "conditioning event has mass below 1e-300");
  }
  checked_power(space.size(), static_cast<std::size_t>(l - k - 1), budget_);

  // (b) a fresh bridge ensemble on [K, L].
  const std::vector<int> a(at_k.begin(), at_k.end());
  const std::vector<int> b(at_l.begin(), at_l.end());
  ExactEngine bridge(EnsembleSpec::make(spec_->n(), k, l, BridgeBoundary{a, b}, spec_->x_max()),
                     kernel_, tilt_, budget_);
  std::vector<int> interior;
  for (int t = k + 1; t < l; ++t) interior.push_back(t);
  Distribution direct = bridge.law_restricted(interior);

  // (a) the global law conditioned on X(K), X(L).
  PathEnumerator enumerator(*spec_, kernel_, tilt_, space, k, l, at_k, at_l);
  bool enumerated = enumerator.run();
  std::vector<double> conditioned;
  if (enumerated) {
    conditioned = std::move(enumerator.log_weights());
  } else {
    const std::size_t states = space.size();
    conditioned.assign(1, result_.forward[static_cast<std::size_t>(k - spec_->m_left())][*ia]);
    std::vector<std::size_t> last_state{*ia};
    for (int t = k + 1; t < l; ++t) {
      std::vector<double> next(conditioned.size() * states, kLogZero);
      std::vector<std::size_t> next_last(next.size());
      for (std::size_t i = 0; i < conditioned.size(); ++i) {
        for (std::size_t s = 0; s < states; ++s) {
          next[i * states + s] = conditioned[i] + step_->log_entry(last_state[i], s);
          next_last[i * states + s] = s;
        }
      }
      conditioned.swap(next);
      last_state.swap(next_last);
    }
    const double beta_l = result_.backward[static_cast<std::size_t>(l - spec_->m_left())][*ib];
    for (std::size_t i = 0; i < conditioned.size(); ++i) {
      conditioned[i] += step_->log_entry(last_state[i], *ib) + beta_l;
    }
  }
  Distribution global(result_.space, static_cast<int>(interior.size()), std::move(conditioned));
  const double tv = tv_exact(direct, global);
  return ConditionalLaw{std::move(direct), tv, enumerated};
}

PathConfig ExactEngine::sample_one(Rng& rng) const {
  const auto& space = *result_.space;
  const auto ids = sample_forward(*step_, *space.index_of(spec_->u()), result_.backward, rng);
  const std::size_t len = ids.size();
  const int n = spec_->n();
  std::vector<int> heights(static_cast<std::size_t>(n) * len);
  for (std::size_t k = 0; k < len; ++k) {
    const auto s = space.state(ids[k]);
    for (int i = 0; i < n; ++i) heights[static_cast<std::size_t>(i) * len + k] = s[static_cast<std::size_t>(i)];
  }
  return PathConfig(spec_, std::move(heights));
}

std::vector<PathConfig> ExactEngine::sample(std::uint64_t seed, std::size_t count,
                                            int threads) const {
  std::vector<std::optional<PathConfig>> slots(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    slots[i].emplace(sample_one(rng));
  });
  std::vector<PathConfig> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

TransferResult partition_bridge(const EnsembleSpec& spec, const Kernel& kernel,
                                const TiltSpec& tilt) {
  if (!spec.is_bridge()) fail(ErrorCode::InvalidArgument, "partition_bridge needs a bridge");
  return ExactEngine(spec, kernel, tilt).result();
}

TransferResult partition_walk(const EnsembleSpec& spec, const Kernel& kernel, const TiltSpec& tilt) {
  if (spec.is_bridge()) fail(ErrorCode::InvalidArgument, "partition_walk needs a walk");
  return ExactEngine(spec, kernel, tilt).result();
}

}  // namespace ensembles
