#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ensembles {

/// Stream splitting: replica r of a run seeded with `seed` draws from
/// mt19937_64 seeded with splitmix64(seed ^ splitmix64(r + 1)). Results never
/// depend on how replicas are scheduled across threads.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t replica) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  static Rng stream(std::uint64_t seed, std::uint64_t replica) {
    return Rng(stream_seed(seed, replica));
  }

  std::uint64_t next() { return engine_(); }

  // 53-bit uniform in [0, 1); bit-identical across standard libraries.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal();

  /// Index drawn with probability proportional to exp(log_weights[i]).
  /// Entries equal to log(0) are never drawn.
  std::size_t categorical_log(std::span<const double> log_weights);

  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ensembles
