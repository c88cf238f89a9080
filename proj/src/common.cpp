#include "ensembles/common.hpp"

#include <algorithm>
#include <cstdlib>

#include "ensembles/rng.hpp"

namespace ensembles {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NonzeroMean: return "NonzeroMean";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::ParityInfeasible: return "ParityInfeasible";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ZeroProbabilityEndpoint: return "ZeroProbabilityEndpoint";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::MissingRequired: return "MissingRequired";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Emission: return "Emission";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string_view module, const std::string& detail)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) +
                         ": " + detail),
      code_(code),
      module_(module) {}

double log_sum_exp(std::span<const double> values) noexcept {
  double peak = kLogZero;
  for (double v : values) peak = std::max(peak, v);
  if (is_log_zero(peak)) return kLogZero;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

std::size_t default_budget() {
  constexpr std::size_t kDefault = 50'000'000;
  const char* env = std::getenv("ENSEMBLES_BUDGET");
  if (env == nullptr || *env == '\0') return kDefault;
  char* end = nullptr;
  const double value = std::strtod(env, &end);
  if (end == env || value < 1.0) return kDefault;
  return static_cast<std::size_t>(value);
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t replica) noexcept {
  return splitmix64(seed ^ splitmix64(replica + 1));
}

double Rng::normal() {
  // Box-Muller on our own uniforms keeps streams identical across libstdc++/libc++.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  double peak = kLogZero;
  for (double w : log_weights) peak = std::max(peak, w);
  double total = 0.0;
  for (double w : log_weights) total += is_log_zero(w) ? 0.0 : std::exp(w - peak);
  double target = uniform() * total;
  std::size_t last = 0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    if (is_log_zero(log_weights[i])) continue;
    last = i;
    target -= std::exp(log_weights[i] - peak);
    if (target < 0.0) return i;
  }
  return last;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = uniform() * total;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    target -= weights[i];
    if (target < 0.0) return i;
  }
  return last;
}

}  // namespace ensembles
