#include <algorithm>
#include <cmath>

#include "ensembles/exact_engine.hpp"

namespace ensembles {

namespace {

std::size_t int_pow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

Distribution::Distribution(std::shared_ptr<const StateSpace> space, int arity,
                           std::vector<double> log_weights)
    : space_(std::move(space)), arity_(arity), log_weights_(std::move(log_weights)) {
  if (arity_ < 0) throw Error(ErrorCode::InvalidArgument, "exact_engine", "negative arity");
  if (log_weights_.size() != int_pow(space_->size(), arity_)) {
    throw Error(ErrorCode::InvalidArgument, "exact_engine", "weight vector has wrong size");
  }
  log_norm_ = log_sum_exp(log_weights_);
  if (is_log_zero(log_norm_) || !std::isfinite(log_norm_)) {
    throw Error(ErrorCode::Infeasible, "exact_engine", "distribution has no mass");
  }
  probs_.resize(log_weights_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    probs_[i] = is_log_zero(log_weights_[i]) ? 0.0 : std::exp(log_weights_[i] - log_norm_);
    total += probs_[i];
  }
  for (double& p : probs_) p /= total;
}

std::vector<std::size_t> Distribution::decode(std::size_t index) const {
  std::vector<std::size_t> ids(static_cast<std::size_t>(arity_));
  const std::size_t base = space_->size();
  for (int k = arity_ - 1; k >= 0; --k) {
    ids[static_cast<std::size_t>(k)] = index % base;
    index /= base;
  }
  return ids;
}

Distribution Distribution::marginalize(std::span<const int> keep) const {
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= arity_ || (k > 0 && keep[k] <= keep[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, "exact_engine",
                  "marginal positions must be strictly increasing and within arity");
    }
  }
  const std::size_t base = space_->size();
  std::vector<double> mass(int_pow(base, static_cast<int>(keep.size())), 0.0);
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (probs_[i] == 0.0) continue;
    const auto ids = decode(i);
    std::size_t j = 0;
    for (int pos : keep) j = j * base + ids[static_cast<std::size_t>(pos)];
    mass[j] += probs_[i];
  }
  for (double& m : mass) m = m > 0.0 ? std::log(m) : kLogZero;
  return Distribution(space_, static_cast<int>(keep.size()), std::move(mass));
}

std::vector<double> Distribution::coordinate_pmf(int position, int curve) const {
  if (position < 0 || position >= arity_ || curve < 0 || curve >= space_->n()) {
    throw Error(ErrorCode::OutOfRange, "exact_engine", "coordinate outside the product");
  }
  std::vector<double> pmf(static_cast<std::size_t>(space_->x_max()) + 1, 0.0);
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (probs_[i] == 0.0) continue;
    const auto ids = decode(i);
    const int h = space_->state(ids[static_cast<std::size_t>(position)])[static_cast<std::size_t>(curve)];
    pmf[static_cast<std::size_t>(h)] += probs_[i];
  }
  return pmf;
}

double tv_exact(const Distribution& p, const Distribution& q) {
  if (!p.space().same_as(q.space()) || p.arity() != q.arity()) {
    throw Error(ErrorCode::SpaceMismatch, "exact_engine",
                "distributions live on different state spaces");
  }
  double sum = 0.0;
  const auto a = p.probs();
  const auto b = q.probs();
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return std::clamp(0.5 * sum, 0.0, 1.0);
}

}  // namespace ensembles
