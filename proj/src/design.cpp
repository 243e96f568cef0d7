#include "roed/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "roed/errors.hpp"

namespace roed {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

double r_poly(int k, const Vector& weights) {
  if (k < 0) throw InvalidArgument("r_poly: negative k");
  const int n = static_cast<int>(weights.size());
  if (k > n) return 0.0;
  std::vector<double> r(k + 1, 0.0);
  r[0] = 1.0;
  for (int j = 0; j < n; ++j) {
    for (int m = std::min(k, j + 1); m >= 1; --m) r[m] += weights[j] * r[m - 1];
  }
  return r[k];
}

ConditionalBernoulli::ConditionalBernoulli(Vector policy, int budget)
    : policy_(std::move(policy)), budget_(budget) {
  const int n = size();
  if (n == 0) throw EmptyDistribution("conditional Bernoulli over zero sensors");
  effective_ = policy_;
  for (int i = 0; i < n; ++i) {
    const double p = policy_[i];
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("policy entries must lie in [0, 1]");
    if (p == 1.0) {
      forced_one_.push_back(i);
    } else if (p > 0.0) {
      effective_[i] = std::clamp(p, kClamp, 1.0 - kClamp);
      free_.push_back(i);
      log_w_.push_back(std::log(effective_[i]) - std::log1p(-effective_[i]));
    }
  }
  needed_ = budget_ - static_cast<int>(forced_one_.size());
  if (budget_ < 0 || needed_ < 0 || needed_ > static_cast<int>(free_.size())) {
    throw EmptyDistribution("no design with " + std::to_string(budget_) +
                            " active sensors is consistent with the policy");
  }

  // Weights are only defined up to a common factor; center the logs so that
  // the tables stay well scaled.
  if (!log_w_.empty()) {
    double mean = 0.0;
    for (double lw : log_w_) mean += lw;
    mean /= static_cast<double>(log_w_.size());
    for (double& lw : log_w_) lw -= mean;
  }

  const int nt = static_cast<int>(free_.size());
  const int kk = needed_ + 1;
  suffix_.assign(static_cast<std::size_t>(nt + 1) * kk, kNegInf);
  suffix_[static_cast<std::size_t>(nt) * kk] = 0.0;
  for (int t = nt - 1; t >= 0; --t) {
    for (int k = 0; k < kk; ++k) {
      double v = suffix_[static_cast<std::size_t>(t + 1) * kk + k];
      if (k > 0) v = log_add(v, log_w_[t] + suffix_[static_cast<std::size_t>(t + 1) * kk + k - 1]);
      suffix_[static_cast<std::size_t>(t) * kk + k] = v;
    }
  }

  // pi_i = w_i R(k - 1, T \ {i}) / R(k, T), with R(., T \ {i}) from the
  // convolution of the prefix and suffix tables around i.
  inclusion_ = Vector::Zero(n);
  for (int i : forced_one_) inclusion_[i] = 1.0;
  if (needed_ > 0) {
    const double log_total = log_r_suffix(0, needed_);
    std::vector<double> prefix(kk, kNegInf);
    prefix[0] = 0.0;
    for (int t = 0; t < nt; ++t) {
      double log_without = kNegInf;
      for (int a = 0; a <= needed_ - 1; ++a) {
        log_without = log_add(log_without, prefix[a] + log_r_suffix(t + 1, needed_ - 1 - a));
      }
      inclusion_[free_[t]] = std::exp(log_w_[t] + log_without - log_total);
      for (int k = needed_; k >= 1; --k) prefix[k] = log_add(prefix[k], log_w_[t] + prefix[k - 1]);
    }
  }
}

double ConditionalBernoulli::log_r_suffix(int position, int k) const {
  if (k < 0) return kNegInf;
  return suffix_[static_cast<std::size_t>(position) * (needed_ + 1) + k];
}

bool ConditionalBernoulli::include(int position, int remaining, double u) const {
  const double log_p =
      log_w_[position] + log_r_suffix(position + 1, remaining - 1) - log_r_suffix(position, remaining);
  return u < std::exp(log_p);
}

double ConditionalBernoulli::support_size() const {
  const int nt = static_cast<int>(free_.size());
  double c = 1.0;
  for (int j = 1; j <= needed_; ++j) c = c * (nt - needed_ + j) / j;
  return c;
}

double ConditionalBernoulli::log_pmf(const Design& design) const {
  if (static_cast<int>(design.size()) != size()) {
    throw InvalidArgument("design length does not match the policy");
  }
  int count = 0;
  for (int i = 0; i < size(); ++i) {
    if (design[i] != 0 && design[i] != 1) throw InvalidArgument("design entries must be 0 or 1");
    const double p = policy_[i];
    if (design[i] == 1 && p == 0.0) return kNegInf;
    if (design[i] == 0 && p == 1.0) return kNegInf;
    count += design[i];
  }
  if (count != budget_) return kNegInf;
  double log_num = 0.0;
  for (std::size_t t = 0; t < free_.size(); ++t) {
    if (design[free_[t]]) log_num += log_w_[t];
  }
  return log_num - log_r_suffix(0, needed_);
}

double ConditionalBernoulli::pmf(const Design& design) const {
  return std::exp(log_pmf(design));
}

std::vector<Design> ConditionalBernoulli::sample(std::uint64_t seed, int count) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<Design> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) out.push_back(sample(rng));
  return out;
}

Vector ConditionalBernoulli::grad_log_pmf(const Design& design) const {
  if (static_cast<int>(design.size()) != size()) {
    throw InvalidArgument("design length does not match the policy");
  }
  Vector g = Vector::Zero(size());
  for (int i : free_) {
    const double p = effective_[i];
    g[i] = (design[i] - inclusion_[i]) / (p * (1.0 - p));
  }
  return g;
}

}  // namespace roed
