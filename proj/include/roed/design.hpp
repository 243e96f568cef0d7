#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "roed/fem.hpp"
#include "roed/noise.hpp"

namespace roed {

// Elementary symmetric polynomial e_k(w) by the recursion
// R(k, A + {j}) = R(k, A) + w_j R(k - 1, A).
double r_poly(int k, const Vector& weights);

// Multivariate Bernoulli with success probabilities p conditioned on exactly
// `budget` successes. Entries with p_i = 0 are never selected and entries with
// p_i = 1 always are; the remaining probabilities are clamped to
// [1e-7, 1 - 1e-7]. Tables are kept in log space.
class ConditionalBernoulli {
 public:
  static constexpr double kClamp = 1e-7;

  // Throws EmptyDistribution if no design of the given size is consistent with p.
  ConditionalBernoulli(Vector policy, int budget);

  int size() const { return static_cast<int>(policy_.size()); }
  int budget() const { return budget_; }
  const Vector& policy() const { return policy_; }
  // Clamped probabilities used for the weights (0 and 1 kept exact).
  const Vector& effective_policy() const { return effective_; }
  const std::vector<int>& free_indices() const { return free_; }
  // Number of designs in the support.
  double support_size() const;

  double log_pmf(const Design& design) const;
  double pmf(const Design& design) const;

  // Sequential conditional draws in index order.
  template <class Rng>
  Design sample(Rng& rng) const;
  std::vector<Design> sample(std::uint64_t seed, int count) const;

  // (xi_i - pi_i) / (p_i (1 - p_i)) on free entries, 0 where p_i is 0 or 1.
  Vector grad_log_pmf(const Design& design) const;
  const Vector& inclusion_probs() const { return inclusion_; }

 private:
  double log_r_suffix(int position, int k) const;
  bool include(int position, int remaining, double u) const;

  Vector policy_;
  Vector effective_;
  int budget_;
  int needed_ = 0;  // budget minus the forced ones
  std::vector<int> free_;
  std::vector<int> forced_one_;
  std::vector<double> log_w_;    // per free position
  std::vector<double> suffix_;   // (|T| + 1) x (needed + 1), log R(k, T[t..])
  Vector inclusion_;
};

template <class Rng>
Design ConditionalBernoulli::sample(Rng& rng) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Design design(size(), 0);
  for (int i : forced_one_) design[i] = 1;
  int remaining = needed_;
  for (int t = 0; t < static_cast<int>(free_.size()) && remaining > 0; ++t) {
    if (include(t, remaining, uniform(rng))) {
      design[free_[t]] = 1;
      --remaining;
    }
  }
  return design;
}

}  // namespace roed
