#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ensembles {

enum class ErrorCode {
  InvalidArgument,
  NotNormalized,
  NonzeroMean,
  NotIrreducible,
  NoRoot,
  OutOfRange,
  TooLarge,
  ParityInfeasible,
  Infeasible,
  ZeroProbabilityEndpoint,
  SpaceMismatch,
  NoConvergence,
  TooShort,
  GridMismatch,
  UnknownKey,
  TypeError,
  MissingRequired,
  Io,
  Emission,
};

std::string_view to_string(ErrorCode code);

/// Library error. The message is prefixed with the module that raised it,
/// e.g. "exact_engine: ParityInfeasible: ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string_view module, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

/// log(0). Every log-space routine treats this value as an exact zero.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) noexcept { return x == kLogZero; }

inline double log_add_exp(double a, double b) noexcept {
  if (is_log_zero(a)) return b;
  if (is_log_zero(b)) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

double log_sum_exp(std::span<const double> values) noexcept;

/// State-space budget in matrix entries. Reads ENSEMBLES_BUDGET on every
/// call; falls back to 5e7.
std::size_t default_budget();

}  // namespace ensembles
