#include "roed/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "roed/errors.hpp"
#include "roed/log.hpp"

namespace roed {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b,
                    c};
  return std::mt19937_64(seq);
}

std::string format_theta(const Vector& theta) {
  std::ostringstream os;
  os.precision(6);
  os << '(';
  for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta[i];
  os << ')';
  return os.str();
}

}  // namespace

double MemoizedUtility::value(const Design& design, const Vector& theta) {
  const std::string key = UtilityMemo::key(design, theta);
  if (auto hit = memo_.find(key)) {
    ++hits_;
    return *hit;
  }
  const double v = utility_->value(design, theta);
  ++evaluations_;
  memo_.insert(key, v);
  return v;
}

std::pair<double, Vector> MemoizedUtility::value_and_gradient(const Design& design,
                                                              const Vector& theta) {
  auto out = utility_->value_and_gradient(design, theta);
  ++evaluations_;
  memo_.insert(UtilityMemo::key(design, theta), out.first);
  return out;
}

RobustMin robust_min_utility(const Design& design, const std::vector<Vector>& theta_bar,
                             const UtilityFn& utility) {
  if (theta_bar.empty()) throw InvalidArgument("robust_min_utility: empty parameter sample");
  RobustMin out{std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < static_cast<int>(theta_bar.size()); ++k) {
    const double v = utility(design, theta_bar[k]);
    if (v < out.value) out = {v, k};
  }
  return out;
}

std::string to_string(BaselineEstimator estimator) {
  return estimator == BaselineEstimator::kPaired ? "paired" : "diagonal";
}

BaselineEstimator baseline_estimator_from_string(const std::string& name) {
  if (name == "diagonal") return BaselineEstimator::kDiagonal;
  if (name == "paired") return BaselineEstimator::kPaired;
  throw InvalidArgument("unknown baseline estimator: " + name);
}

double optimal_baseline(const std::vector<Design>& designs, const std::vector<double>& utilities,
                        const ConditionalBernoulli& dist, BaselineEstimator estimator) {
  if (designs.empty() || designs.size() != utilities.size()) {
    throw InvalidArgument("optimal_baseline: designs and utilities mismatch");
  }
  const int n = static_cast<int>(designs.size());
  Vector score_sum = Vector::Zero(dist.size());
  std::vector<Vector> scores;
  scores.reserve(n);
  for (const Design& d : designs) {
    scores.push_back(dist.grad_log_pmf(d));
    score_sum += scores.back();
  }
  double numerator = 0.0;
  for (int i = 0; i < n; ++i) {
    numerator += utilities[i] * scores[i].dot(estimator == BaselineEstimator::kPaired
                                                  ? score_sum
                                                  : scores[i]);
  }
  double denominator = 0.0;
  const Vector& p = dist.effective_policy();
  const Vector& pi = dist.inclusion_probs();
  for (int i : dist.free_indices()) {
    const double w = p[i] / (1.0 - p[i]);
    denominator += std::pow(1.0 + w, 4) / (w * w) * (pi[i] - pi[i] * pi[i]);
  }
  denominator *= n;
  if (!(denominator > 1e-300)) return 0.0;
  return std::max(0.0, numerator / denominator);
}

Vector stochastic_gradient(const std::vector<Design>& designs,
                           const std::vector<double>& utilities,
                           const ConditionalBernoulli& dist, double baseline) {
  if (designs.empty() || designs.size() != utilities.size()) {
    throw InvalidArgument("stochastic_gradient: designs and utilities mismatch");
  }
  Vector g = Vector::Zero(dist.size());
  for (std::size_t i = 0; i < designs.size(); ++i) {
    g += (utilities[i] - baseline) * dist.grad_log_pmf(designs[i]);
  }
  return g / static_cast<double>(designs.size());
}

Vector project_policy(const Vector& target, int budget) {
  const int n = static_cast<int>(target.size());
  Vector p = target.cwiseMax(0.0).cwiseMin(1.0);
  std::vector<int> ones;
  std::vector<int> zeros;
  for (int i = 0; i < n; ++i) {
    if (p[i] == 1.0) ones.push_back(i);
    if (p[i] == 0.0) zeros.push_back(i);
  }
  const double inside = ConditionalBernoulli::kClamp;
  if (static_cast<int>(ones.size()) > budget) {
    std::stable_sort(ones.begin(), ones.end(),
                     [&](int a, int b) { return target[a] > target[b]; });
    for (std::size_t k = budget; k < ones.size(); ++k) p[ones[k]] = 1.0 - inside;
  }
  if (static_cast<int>(zeros.size()) > n - budget) {
    std::stable_sort(zeros.begin(), zeros.end(),
                     [&](int a, int b) { return target[a] < target[b]; });
    for (std::size_t k = n - budget; k < zeros.size(); ++k) p[zeros[k]] = inside;
  }
  return p;
}

Vector average_theta(const std::vector<Vector>& theta_bar) {
  if (theta_bar.empty()) throw InvalidArgument("average_theta: empty parameter sample");
  Vector mean = Vector::Zero(theta_bar.front().size());
  for (const Vector& t : theta_bar) mean += t;
  return mean / static_cast<double>(theta_bar.size());
}

RoedOptimizer::RoedOptimizer(RobustUtility& utility, OptimizerConfig config)
    : utility_(utility), config_(std::move(config)), memo_(utility) {
  const int nd = utility_.num_sensors();
  if (config_.budget < 1 || config_.budget > nd) {
    throw InvalidArgument("optimizer: budget must lie in [1, number of sensors]");
  }
  if (config_.ensemble < 1 || config_.max_outer_iterations < 1 ||
      config_.max_policy_iterations < 1 || config_.max_inner_iterations < 1 ||
      config_.lbfgs_memory < 1 || config_.halving_patience < 1) {
    throw InvalidArgument("optimizer: counts must be positive");
  }
  if (!(config_.learning_rate >= 0.0) || !(config_.policy_tolerance > 0.0) ||
      !(config_.inner_tolerance > 0.0)) {
    throw InvalidArgument("optimizer: invalid learning rate or tolerance");
  }
  if (config_.final_ensemble <= 0) config_.final_ensemble = config_.ensemble;
  for (const Vector& t : config_.initial_theta) {
    if (t.size() != utility_.box().dim() || !utility_.box().contains(t)) {
      throw InvalidArgument("optimizer: initial theta outside the parameter box");
    }
  }
  if (config_.initial_policy && config_.initial_policy->size() != nd) {
    throw InvalidArgument("optimizer: initial policy has the wrong length");
  }
}

std::vector<Design> RoedOptimizer::draw(const ConditionalBernoulli& dist, int count,
                                        std::uint32_t a, std::uint32_t b) {
  auto rng = stream(config_.seed, a, b, 0x706f6cu);
  std::vector<Design> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    out.push_back(dist.sample(rng));
    ++sampled_;
    if (active_count(out.back()) != config_.budget) {
      ++infeasible_;
      log::error("sampled design violates the budget");
    }
  }
  return out;
}

double RoedOptimizer::robust_value(const Design& design, const std::vector<Vector>& theta_bar,
                                   int* argmin) {
  RobustMin m = robust_min_utility(design, theta_bar, [&](const Design& d, const Vector& t) {
    return memo_.value(d, t);
  });
  if (argmin) *argmin = m.index;
  return m.value;
}

PolicyResult RoedOptimizer::policy_opt(const Vector& p0, const std::vector<Vector>& theta_bar,
                                       int outer) {
  PolicyResult out;
  Vector p = p0;
  double eta = config_.learning_rate;
  double best = -std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int n = 0; n < config_.max_policy_iterations; ++n) {
    ConditionalBernoulli dist(p, config_.budget);
    PolicyStepRecord rec;
    rec.outer = outer;
    rec.step = n;
    rec.policy = p;
    rec.theta_count = static_cast<int>(theta_bar.size());
    const long before = memo_.evaluations();
    rec.designs = draw(dist, config_.ensemble, static_cast<std::uint32_t>(outer),
                       static_cast<std::uint32_t>(n + 1));
    for (const Design& d : rec.designs) rec.utilities.push_back(robust_value(d, theta_bar));
    rec.new_evaluations = memo_.evaluations() - before;
    rec.objective = std::accumulate(rec.utilities.begin(), rec.utilities.end(), 0.0) /
                    static_cast<double>(rec.utilities.size());
    rec.baseline = config_.use_baseline
                       ? optimal_baseline(rec.designs, rec.utilities, dist,
                                          config_.baseline_estimator)
                       : 0.0;
    const Vector g = stochastic_gradient(rec.designs, rec.utilities, dist, rec.baseline);
    rec.gradient_norm = g.norm();
    rec.learning_rate = eta;
    const Vector next = project_policy(p + eta * g, config_.budget);
    rec.step_norm = (next - p).norm();
    out.steps.push_back(rec);
    out.iterations = n + 1;
    p = next;
    if (rec.step_norm < config_.policy_tolerance) {
      out.converged = true;
      break;
    }
    if (rec.objective > best) {
      best = rec.objective;
      stall = 0;
    } else if (++stall >= config_.halving_patience) {
      eta *= 0.5;
      stall = 0;
    }
  }
  out.policy = p;
  return out;
}

InnerResult RoedOptimizer::inner_step(const Design& design, const Vector& theta_start) {
  const Box& box = utility_.box();
  const int dim = box.dim();
  const Vector width = box.upper - box.lower;
  auto to_theta = [&](const Vector& x) {
    Vector t = box.lower + width.cwiseProduct(x);
    return box.project(t);
  };
  auto project = [&](const Vector& x) { return x.cwiseMax(0.0).cwiseMin(1.0).eval(); };
  auto evaluate = [&](const Vector& x, double& f, Vector& g) {
    auto [v, grad] = memo_.value_and_gradient(design, to_theta(x));
    f = v;
    g = grad.cwiseProduct(width);
  };
  auto projected_gradient = [&](const Vector& x, const Vector& g) {
    return (project(x - g) - x).lpNorm<Eigen::Infinity>();
  };

  InnerResult out;
  Vector x = Vector::Zero(dim);
  for (int i = 0; i < dim; ++i) {
    x[i] = width[i] > 0.0 ? (theta_start[i] - box.lower[i]) / width[i] : 0.0;
  }
  x = project(x);
  double f;
  Vector g;
  evaluate(x, f, g);
  out.evaluations = 1;
  out.initial_value = f;
  const double tol = config_.inner_tolerance * std::max(1.0, projected_gradient(x, g));
  std::deque<std::pair<Vector, Vector>> memory;
  const double c1 = 1e-4;

  for (int it = 0; it < config_.max_inner_iterations; ++it) {
    out.iterations = it + 1;
    out.projected_gradient = projected_gradient(x, g);
    if (out.projected_gradient <= tol) {
      out.converged = true;
      break;
    }
    // Variables held at a bound by the gradient are frozen for this step.
    Eigen::Array<bool, Eigen::Dynamic, 1> free(dim);
    for (int i = 0; i < dim; ++i) {
      free[i] = !((x[i] <= 0.0 && g[i] > 0.0) || (x[i] >= 1.0 && g[i] < 0.0)) && width[i] > 0.0;
    }
    auto mask = [&](Vector v) {
      for (int i = 0; i < dim; ++i)
        if (!free[i]) v[i] = 0.0;
      return v;
    };
    const Vector gf = mask(g);
    Vector d = -gf;
    if (!memory.empty()) {
      Vector q = gf;
      std::vector<double> alpha(memory.size());
      for (int k = static_cast<int>(memory.size()) - 1; k >= 0; --k) {
        const auto& [s, y] = memory[k];
        alpha[k] = mask(s).dot(q) / s.dot(y);
        q -= alpha[k] * mask(y);
      }
      const auto& [s_last, y_last] = memory.back();
      q *= s_last.dot(y_last) / y_last.dot(y_last);
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& [s, y] = memory[k];
        const double beta = mask(y).dot(q) / s.dot(y);
        q += (alpha[k] - beta) * mask(s);
      }
      d = -mask(q);
      if (!(d.dot(gf) < 0.0)) d = -gf;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = 1.0;
      if (memory.empty() || attempt == 1) {
        d = -gf;
        const double dmax = d.lpNorm<Eigen::Infinity>();
        if (dmax > 0.0) step = std::min(1.0, 0.25 / dmax);
      }
      for (int bt = 0; bt < 30; ++bt, step *= 0.5) {
        const Vector xn = project(x + step * d);
        const Vector s = xn - x;
        if (s.lpNorm<Eigen::Infinity>() == 0.0) break;
        double fn;
        Vector gn;
        evaluate(xn, fn, gn);
        ++out.evaluations;
        if (fn <= f + c1 * g.dot(s)) {
          const Vector y = gn - g;
          if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            memory.emplace_back(s, y);
            if (static_cast<int>(memory.size()) > config_.lbfgs_memory) memory.pop_front();
          }
          x = xn;
          f = fn;
          g = gn;
          accepted = true;
          break;
        }
      }
      if (!accepted) memory.clear();
    }
    if (!accepted) {
      out.line_search_failed = true;
      out.projected_gradient = projected_gradient(x, g);
      break;
    }
  }
  out.theta = to_theta(x);
  out.value = f;
  return out;
}

RoedResult RoedOptimizer::run() {
  const int nd = utility_.num_sensors();
  RoedResult result;
  std::vector<Vector> theta_bar = config_.initial_theta;
  if (theta_bar.empty()) theta_bar.push_back(utility_.box().midpoint());
  Vector p = config_.initial_policy
                 ? *config_.initial_policy
                 : Vector::Constant(nd, static_cast<double>(config_.budget) / nd);
  if (utility_.update_theta_bar(average_theta(theta_bar))) {
    memo_.invalidate();
    ++result.theta_bar_refreshes;
  }

  result.stop_reason = "max_outer_iterations";
  for (int l = 0; l < config_.max_outer_iterations; ++l) {
    OuterRecord rec;
    rec.outer = l;
    PolicyResult pol = policy_opt(p, theta_bar, l);
    result.policy_steps.insert(result.policy_steps.end(), pol.steps.begin(), pol.steps.end());
    rec.policy = pol.policy;
    rec.policy_iterations = pol.iterations;

    ConditionalBernoulli dist(pol.policy, config_.budget);
    const std::vector<Design> candidates =
        draw(dist, config_.ensemble, static_cast<std::uint32_t>(l), 0x10000u);
    double best = -std::numeric_limits<double>::infinity();
    for (const Design& d : candidates) {
      const double v = robust_value(d, theta_bar);
      if (v > best) {
        best = v;
        rec.incumbent = d;
      }
    }
    rec.incumbent_value = best;
    int worst = 0;
    robust_value(rec.incumbent, theta_bar, &worst);
    rec.theta_start = theta_bar[worst];

    InnerResult inner = inner_step(rec.incumbent, rec.theta_start);
    rec.theta_new = inner.theta;
    rec.theta_value = inner.value;
    rec.inner_iterations = inner.iterations;
    rec.inner_converged = inner.converged;
    if (inner.line_search_failed) log::info("inner stage: line search stopped early");

    double nearest = std::numeric_limits<double>::infinity();
    for (const Vector& t : theta_bar) nearest = std::min(nearest, (t - inner.theta).norm());
    const double policy_change = (pol.policy - p).norm();
    p = pol.policy;

    bool stop = false;
    if (nearest <= config_.duplicate_tolerance) {
      rec.note = "duplicate";
      log::info("outer " + std::to_string(l) + ": duplicate parameter " +
                format_theta(inner.theta) + " rejected");
      result.stop_reason = "stagnation";
      stop = true;
    } else if (nearest <= config_.stagnation_tolerance) {
      rec.note = "stagnation";
      result.stop_reason = "stagnation";
      stop = true;
    } else {
      theta_bar.push_back(inner.theta);
      rec.appended = true;
      if (utility_.update_theta_bar(average_theta(theta_bar))) {
        memo_.invalidate();
        ++result.theta_bar_refreshes;
        rec.note = "refreshed";
      }
    }
    rec.theta_count = static_cast<int>(theta_bar.size());
    log::info("outer " + std::to_string(l) + ": incumbent value " + std::to_string(best) +
              ", worst-case value " + std::to_string(inner.value) + ", |theta_bar| = " +
              std::to_string(theta_bar.size()));
    result.outer.push_back(rec);
    if (stop) {
      result.converged = true;
      break;
    }
    if (policy_change < config_.policy_tolerance && l > 0) {
      result.converged = true;
      result.stop_reason = "policy_converged";
      break;
    }
  }

  ConditionalBernoulli dist(p, config_.budget);
  result.final_samples = draw(dist, config_.final_ensemble, 0xffffu, 0x20000u);
  double best = -std::numeric_limits<double>::infinity();
  for (const Design& d : result.final_samples) {
    const double v = robust_value(d, theta_bar);
    result.final_utilities.push_back(v);
    if (v > best) {
      best = v;
      result.design = d;
    }
  }
  int worst = 0;
  result.value = robust_value(result.design, theta_bar, &worst);
  result.theta_opt = theta_bar[worst];
  result.policy = p;
  result.theta_bar = theta_bar;
  result.sampled_designs = sampled_;
  result.infeasible_designs = infeasible_;
  result.utility_evaluations = memo_.evaluations();
  result.memo_hits = memo_.hits();
  return result;
}

}  // namespace roed
