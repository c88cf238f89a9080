#include <algorithm>
#include <limits>

#include "ensembles/exact_engine.hpp"

namespace ensembles {

namespace {

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t s = a + b;
  return s < a ? std::numeric_limits<std::uint64_t>::max() : s;
}

void fill(std::vector<int>& flat, std::vector<int>& tuple, int pos, int n, int hi) {
  // hi: largest value allowed at this position (exclusive upper bound is hi + 1)
  const int lo = n - pos;
  for (int v = lo; v <= hi; ++v) {
    tuple[static_cast<std::size_t>(pos)] = v;
    if (pos + 1 == n) {
      flat.insert(flat.end(), tuple.begin(), tuple.end());
    } else {
      fill(flat, tuple, pos + 1, n, v - 1);
    }
  }
}

}  // namespace

std::size_t chamber_size(int n, int x_max) {
  if (n < 1 || x_max < n) return 0;
  // C(x_max, n) via the multiplicative formula in long double, saturating.
  long double c = 1.0L;
  for (int i = 1; i <= n; ++i) {
    c = c * static_cast<long double>(x_max - n + i) / static_cast<long double>(i);
    if (c > 1.8e19L) return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(c + 0.5L);
}

std::shared_ptr<const StateSpace> StateSpace::enumerate(int n, int x_max, std::size_t budget) {
  if (n < 1 || x_max < n) {
    throw Error(ErrorCode::InvalidArgument, "exact_engine", "need 1 <= n <= x_max");
  }
  const std::size_t count = chamber_size(n, x_max);
  if (count > budget) {
    throw Error(ErrorCode::TooLarge, "exact_engine",
                "C(" + std::to_string(x_max) + "," + std::to_string(n) + ") = " +
                    std::to_string(count) + " states exceeds budget " + std::to_string(budget));
  }
  auto space = std::shared_ptr<StateSpace>(new StateSpace());
  space->n_ = n;
  space->x_max_ = x_max;
  space->size_ = count;
  space->flat_.reserve(count * static_cast<std::size_t>(n));
  std::vector<int> tuple(static_cast<std::size_t>(n));
  fill(space->flat_, tuple, 0, n, x_max);

  space->binom_.assign(static_cast<std::size_t>(n) + 1,
                       std::vector<std::uint64_t>(static_cast<std::size_t>(x_max) + 1, 0));
  for (int m = 0; m <= x_max; ++m) {
    space->binom_[0][static_cast<std::size_t>(m)] = 1;
    for (int k = 1; k <= n && k <= m; ++k) {
      space->binom_[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] =
          saturating_add(space->binom_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(m - 1)],
                         space->binom_[static_cast<std::size_t>(k)][static_cast<std::size_t>(m - 1)]);
    }
  }
  return space;
}

std::optional<std::size_t> StateSpace::index_of(std::span<const int> tuple) const {
  if (tuple.size() != static_cast<std::size_t>(n_)) return std::nullopt;
  if (tuple.front() > x_max_ || tuple.back() < 1) return std::nullopt;
  std::uint64_t rank = 0;
  for (int i = 0; i < n_; ++i) {
    const int s = tuple[static_cast<std::size_t>(i)];
    if (i + 1 < n_ && s <= tuple[static_cast<std::size_t>(i) + 1]) return std::nullopt;
    rank += binom_[static_cast<std::size_t>(n_ - i)][static_cast<std::size_t>(s - 1)];
  }
  return static_cast<std::size_t>(rank);
}

}  // namespace ensembles
