#include "ensembles/gibbs_sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ensembles/parallel.hpp"

namespace ensembles {

namespace {

constexpr std::string_view kModule = "gibbs_sampler";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, kModule, detail);
}

}  // namespace

void McmcParams::validate() const {
  if (block_len < 2) fail(ErrorCode::InvalidArgument, "block_len must be >= 2");
  if (overlap < 1 || overlap >= block_len) {
    fail(ErrorCode::InvalidArgument, "overlap must satisfy 1 <= overlap < block_len");
  }
  if (thin < 1) fail(ErrorCode::InvalidArgument, "thin must be >= 1");
  if (sweeps < 0 || burn_in < 0) fail(ErrorCode::InvalidArgument, "negative sweep counts");
  if (chains < 1) fail(ErrorCode::InvalidArgument, "chains must be >= 1");
}

BlockSampler::BlockSampler(std::shared_ptr<const EnsembleSpec> spec, Kernel kernel, TiltSpec tilt,
                           std::size_t budget)
    : spec_(std::move(spec)), kernel_(std::move(kernel)), tilt_(std::move(tilt)), budget_(budget) {}

const TransferStep& BlockSampler::step_for(int cutoff) {
  auto it = steps_.find(cutoff);
  if (it == steps_.end()) {
    auto space = StateSpace::enumerate(spec_->n(), cutoff, budget_);
    it = steps_.emplace(cutoff, TransferStep::build(space, kernel_, tilt_, budget_)).first;
  }
  return *it->second;
}

void BlockSampler::resample_block(PathConfig& config, int k, int l, Rng& rng) {
  const bool free_end = l == spec_->n_right() + 1;
  if (free_end && spec_->is_bridge()) {
    fail(ErrorCode::InvalidArgument, "free right end needs a walk boundary");
  }
  if (!(spec_->m_left() <= k && k < l && (l <= spec_->n_right() || free_end))) {
    fail(ErrorCode::OutOfRange, "block outside window");
  }
  if (l == k + 1) return;

  const auto a = config.column(k);
  const int steps = (free_end ? spec_->n_right() : l) - k;
  int reach = a.front();
  std::optional<std::vector<int>> b;
  if (!free_end) {
    b = config.column(l);
    reach = std::max(reach, b->front());
  }
  // Heights reachable inside the block stay below this, so the block law is
  // exact for the x_max-truncated model.
  const int cutoff = std::min(spec_->x_max(), reach + steps * kernel_.max_step() + 2);
  const TransferStep& step = step_for(cutoff);
  const auto& space = step.space();

  const auto ia = space.index_of(a);
  std::optional<std::size_t> ib;
  if (b) ib = space.index_of(*b);
  if (!ia || (b && !ib)) fail(ErrorCode::Infeasible, "block endpoint outside the chamber");
  const auto beta = backward_messages(step, steps, ib);
  if (is_log_zero(beta[0][*ia])) fail(ErrorCode::Infeasible, "block has no admissible interior");
  const auto ids = sample_forward(step, *ia, beta, rng);

  const int last = free_end ? spec_->n_right() : l - 1;
  for (int t = k + 1; t <= last; ++t) {
    config.set_column(t, space.state(ids[static_cast<std::size_t>(t - k)]));
  }
}

void BlockSampler::sweep(PathConfig& config, const McmcParams& params, Rng& rng) {
  const int stride = params.block_len - params.overlap;
  const int right = spec_->n_right();
  for (int k = spec_->m_left(); k < right; k += stride) {
    const int l = std::min(k + params.block_len, right);
    if (l == right) {
      resample_block(config, k, spec_->is_bridge() ? right : right + 1, rng);
      break;
    }
    resample_block(config, k, l, rng);
  }
}

PathConfig init_config(std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel, Rng& rng) {
  int top = spec->u().front();
  if (const auto* v = spec->v()) top = std::max(top, v->front());
  int cutoff = std::min(spec->x_max(), top + spec->n() * kernel.max_step() + 4);
  const TiltSpec flat = TiltSpec::zero_tilt(2.0, Potential::linear(1.0));
  for (;;) {
    try {
      ExactEngine engine(spec->with_x_max(cutoff), kernel, flat);
      const PathConfig draw = engine.sample_one(rng);
      std::vector<int> heights(draw.heights().begin(), draw.heights().end());
      return PathConfig(spec, std::move(heights));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ParityInfeasible) {
        fail(ErrorCode::Infeasible, std::string("boundary data violate kernel parity (") +
                                        e.what() + ")");
      }
      if (e.code() != ErrorCode::Infeasible) throw;
      if (cutoff >= spec->x_max()) fail(ErrorCode::Infeasible, "no admissible path within x_max");
      cutoff = std::min(spec->x_max(), 2 * cutoff);
    }
  }
}

double top_at_center(const PathConfig& config) {
  const auto& s = config.spec();
  const int center = s.m_left() + (s.n_right() - s.m_left()) / 2;
  return config(0, center);
}

double run_chain(std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel,
                 const TiltSpec& tilt, const McmcParams& params, int chain,
                 const std::function<void(const PathConfig&)>& emit) {
  params.validate();
  Rng rng = Rng::stream(params.seed, static_cast<std::uint64_t>(chain));
  BlockSampler sampler(spec, kernel, tilt);
  PathConfig config = init_config(spec, kernel, rng);
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < params.sweeps; ++s) {
    sampler.sweep(config, params, rng);
    if (s >= params.burn_in && (s - params.burn_in) % params.thin == 0) emit(config);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return params.sweeps > 0 ? seconds / params.sweeps : 0.0;
}

std::pair<std::vector<PathConfig>, ChainDiagnostics> sample_paths(
    std::shared_ptr<const EnsembleSpec> spec, const Kernel& kernel, const TiltSpec& tilt,
    const McmcParams& params, int threads) {
  params.validate();
  const auto chains = static_cast<std::size_t>(params.chains);
  std::vector<std::vector<PathConfig>> per_chain(chains);
  std::vector<double> seconds(chains, 0.0);
  parallel_for(chains, threads, [&](std::size_t c) {
    seconds[c] = run_chain(spec, kernel, tilt, params, static_cast<int>(c),
                           [&](const PathConfig& p) { per_chain[c].push_back(p); });
  });

  ChainDiagnostics diag;
  double top_sum = 0.0, area_sum = 0.0, top_w = 0.0, area_w = 0.0;
  std::vector<PathConfig> all;
  for (std::size_t c = 0; c < chains; ++c) {
    std::vector<double> top, area;
    for (const auto& p : per_chain[c]) {
      top.push_back(top_at_center(p));
      area.push_back(area_functional(p, tilt));
    }
    const double w = static_cast<double>(top.size());
    try {
      top_sum += w * autocorr(top);
      top_w += w;
    } catch (const Error&) {
    }
    try {
      area_sum += w * autocorr(area);
      area_w += w;
    } catch (const Error&) {
    }
    diag.seconds_per_sweep += seconds[c] / static_cast<double>(chains);
    for (auto& p : per_chain[c]) all.push_back(std::move(p));
  }
  if (top_w > 0) diag.tau_top = top_sum / top_w;
  if (area_w > 0) diag.tau_area = area_sum / area_w;
  diag.samples = all.size();
  return {std::move(all), diag};
}

double autocorr(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 10) fail(ErrorCode::TooShort, "series shorter than 10");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  double c0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    centered[i] = series[i] - mean;
    c0 += centered[i] * centered[i];
  }
  if (!(c0 > 0.0)) fail(ErrorCode::TooShort, "series has zero variance");
  double tau = 0.5;
  for (std::size_t w = 1; w < n; ++w) {
    double c = 0.0;
    for (std::size_t i = 0; i + w < n; ++i) c += centered[i] * centered[i + w];
    tau += c / c0;
    if (static_cast<double>(w) >= 5.0 * tau) break;
  }
  return std::max(0.5, tau);
}

}  // namespace ensembles
