#include "roed/utility.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "roed/errors.hpp"
#include "roed/log.hpp"
#include "roed/parallel.hpp"

namespace roed {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a,
                    b};
  return std::mt19937_64(seq);
}

// Modified Gram-Schmidt in the M inner product, applied twice. Columns whose
// remaining norm falls below tol * (largest input norm) are dropped.
Matrix m_orthonormalize(const Matrix& Y, const SparseMatrix& M) {
  double scale = 0.0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    scale = std::max(scale, std::sqrt(std::max(0.0, Y.col(j).dot(M * Y.col(j)))));
  }
  Matrix Q(Y.rows(), Y.cols());
  if (scale == 0.0) return Q.leftCols(0);
  const double tol = 1e-9 * scale;
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    Vector v = Y.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < kept; ++i) {
        v -= Q.col(i).dot(M * v) * Q.col(i);
      }
    }
    const double norm = std::sqrt(std::max(0.0, v.dot(M * v)));
    if (norm <= tol) continue;
    Q.col(kept++) = v / norm;
  }
  return Q.leftCols(kept);
}

}  // namespace

EigenPairs randomized_eigs(const HessianFormApply& hessian_form, const GaussianPrior& prior,
                           const RandomizedEigOptions& options, SolveCounter* counter) {
  if (options.rank < 0 || options.oversample < 0 || options.power_iterations < 0) {
    throw InvalidArgument("randomized_eigs: negative rank, oversampling or power iterations");
  }
  const int n = prior.grid().num_nodes();
  const int k = std::min(options.rank + options.oversample, n);
  const SparseMatrix& M = prior.mass();

  auto prior_solves = [&](long count) {
    if (counter) counter->prior_solves += count;
  };
  // H~ v = A^{-1} H_form A^{-1} M v
  auto apply_operator = [&](const Matrix& V) {
    Matrix out(n, V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
      out.col(j) = prior.solve_operator(hessian_form(prior.apply_sqrt_cov(V.col(j))));
    }
    prior_solves(2 * V.cols());
    return out;
  };

  EigenPairs result;
  if (options.rank == 0 || k == 0) {
    result.values = Vector(0);
    result.omega = Matrix(n, 0);
    result.psi = Matrix(n, 0);
    return result;
  }

  Matrix Q;
  for (std::uint32_t attempt = 0;; ++attempt) {
    auto rng = make_rng(options.seed, attempt, 0x72616e64u);
    std::normal_distribution<double> normal;
    Matrix omega(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = normal(rng);
    }
    Matrix Y = apply_operator(omega);
    for (int q = 0; q < options.power_iterations && Y.allFinite(); ++q) {
      Y = apply_operator(m_orthonormalize(Y, M));
    }
    if (Y.allFinite()) {
      Q = m_orthonormalize(Y, M);
      if (Q.allFinite()) break;
    }
    if (attempt >= 1) throw BreakdownInQR("sketch of the Hessian is not finite");
    log::warn("randomized_eigs: non-finite sketch, retrying with a fresh seed");
  }

  const Eigen::Index kq = Q.cols();
  Matrix Z(n, kq);
  Matrix HZ(n, kq);
  for (Eigen::Index j = 0; j < kq; ++j) {
    Z.col(j) = prior.apply_sqrt_cov(Q.col(j));
    HZ.col(j) = hessian_form(Z.col(j));
  }
  prior_solves(kq);
  Matrix T = Z.transpose() * HZ;
  T = 0.5 * (T + T.transpose()).eval();
  if (!T.allFinite()) throw BreakdownInQR("Rayleigh-Ritz matrix is not finite");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(T);
  const int keep = std::min<int>(options.rank, static_cast<int>(kq));
  result.values.resize(keep);
  result.omega.resize(n, keep);
  result.psi.resize(n, keep);
  for (int c = 0; c < keep; ++c) {
    const Eigen::Index src = kq - 1 - c;
    result.values[c] = eig.eigenvalues()[src];
    result.omega.col(c) = Q * eig.eigenvectors().col(src);
    result.psi.col(c) = Z * eig.eigenvectors().col(src);
  }
  const double lead = keep > 0 ? std::max(result.values[0], 0.0) : 0.0;
  for (int c = 0; c < keep; ++c) {
    if (result.values[c] <= options.truncation * lead) result.values[c] = 0.0;
  }
  for (int c = 0; c + 1 < keep; ++c) {
    if (result.values[c + 1] > 0.0 &&
        std::abs(result.values[c] - result.values[c + 1]) < 1e-10 * lead) {
      result.degenerate = true;
    }
  }
  return result;
}

double info_gain_low_rank(const Vector& eigenvalues, double constant) {
  double sum = 0.0;
  for (double lambda : eigenvalues) {
    if (lambda < 0.0) throw InvalidArgument("info_gain_low_rank: negative eigenvalue");
    sum += std::log1p(lambda) - lambda / (1.0 + lambda);
  }
  return 0.5 * sum + constant;
}

double info_gain_low_rank(const EigenPairs& eigs, double constant) {
  return info_gain_low_rank(eigs.values, constant);
}

UtilityEvaluator::UtilityEvaluator(std::shared_ptr<const ForwardProblem> forward,
                                   std::shared_ptr<const GaussianPrior> prior,
                                   std::shared_ptr<const NoiseModel> noise,
                                   std::vector<FixedMapPoint> samples, UtilityOptions options)
    : forward_(std::move(forward)),
      prior_(std::move(prior)),
      noise_(std::move(noise)),
      samples_(std::move(samples)),
      options_(options) {
  if (!forward_ || !prior_ || !noise_) throw InvalidArgument("UtilityEvaluator: null component");
  if (samples_.empty()) throw InvalidArgument("UtilityEvaluator: no samples");
  if (noise_->num_sensors() != forward_->num_sensors()) {
    throw InvalidArgument("UtilityEvaluator: noise model and sensors disagree");
  }
}

std::vector<FixedMapPoint> UtilityEvaluator::freeze(const ForwardProblem& forward,
                                                    const GaussianPrior& prior,
                                                    const std::vector<Field>& map_points,
                                                    const std::vector<Vector>& data,
                                                    int workers) {
  if (map_points.size() != data.size()) {
    throw InvalidArgument("freeze: map points and data differ in length");
  }
  std::vector<FixedMapPoint> out(map_points.size());
  parallel_for(static_cast<int>(out.size()), workers, [&](int i) {
    out[i].linearization = forward.linearize(map_points[i]);
    out[i].data = data[i];
    out[i].constant = 0.5 * prior.cm_norm_sq(map_points[i] - prior.mean());
  });
  return out;
}

EigenPairs UtilityEvaluator::eigenpairs(int sample, const MaskedPrecision& precision,
                                        SolveCounter* counter) const {
  const Linearization& lin = *samples_.at(sample).linearization;
  const Matrix& P = precision.matrix();
  RandomizedEigOptions eo;
  eo.rank = options_.rank ? *options_.rank : static_cast<int>(precision.active().size());
  eo.oversample = options_.oversample;
  eo.power_iterations = options_.power_iterations;
  eo.truncation = options_.truncation;
  std::seed_seq seq{static_cast<std::uint32_t>(options_.eig_seed),
                    static_cast<std::uint32_t>(options_.eig_seed >> 32),
                    static_cast<std::uint32_t>(sample), 2u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  eo.seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return randomized_eigs([&](const Field& z) { return lin.gn_hessian_form_apply(P, z, counter); },
                         *prior_, eo, counter);
}

UtilityEvaluator::SampleResult UtilityEvaluator::evaluate_sample(
    int i, const MaskedPrecision& precision, const Vector& theta, bool want_gradient,
    SolveCounter* counter) const {
  (void)theta;
  SampleResult out;
  EigenPairs eigs = eigenpairs(i, precision, counter);
  out.value = info_gain_low_rank(eigs, samples_[i].constant);
  out.degenerate = eigs.degenerate;
  if (!want_gradient) return out;
  const Linearization& lin = *samples_[i].linearization;
  Matrix observed(forward_->num_sensors(), 0);
  std::vector<double> weights;
  for (int n = 0; n < eigs.size(); ++n) {
    const double lambda = eigs.values[n];
    if (lambda <= 0.0) continue;
    Vector o = forward_->observe(lin.incremental_state(eigs.psi.col(n), counter));
    observed.conservativeResize(Eigen::NoChange, observed.cols() + 1);
    observed.col(observed.cols() - 1) = o;
    weights.push_back(0.5 * lambda / ((1.0 + lambda) * (1.0 + lambda)));
  }
  out.gradient = Vector::Zero(noise_->dim());
  for (int j = 0; j < noise_->dim(); ++j) {
    const Matrix dP = noise_->d_masked_precision(precision, theta, j);
    double g = 0.0;
    for (Eigen::Index n = 0; n < observed.cols(); ++n) {
      g += weights[n] * observed.col(n).dot(dP * observed.col(n));
    }
    out.gradient[j] = g;
  }
  return out;
}

namespace {

SolveCounts snapshot(const SolveCounter& c) {
  return {c.forward_solves.load(), c.prior_solves.load(), c.hessian_applies.load()};
}

}  // namespace

UtilityValue UtilityEvaluator::value(const Design& design, const Vector& theta) const {
  return value_and_gradient_impl(design, theta, false).value;
}

UtilityGradient UtilityEvaluator::gradient(const Design& design, const Vector& theta) const {
  return value_and_gradient_impl(design, theta, true).gradient;
}

UtilityValueAndGradient UtilityEvaluator::value_and_gradient(const Design& design,
                                                             const Vector& theta) const {
  return value_and_gradient_impl(design, theta, true);
}

UtilityValueAndGradient UtilityEvaluator::value_and_gradient_impl(const Design& design,
                                                                  const Vector& theta,
                                                                  bool want_gradient) const {
  if (static_cast<int>(design.size()) != forward_->num_sensors()) {
    throw InvalidArgument("utility: design length does not match the sensor count");
  }
  const MaskedPrecision precision = noise_->masked_precision(design, theta);
  const int count = num_samples();
  std::vector<SampleResult> results(count);
  SolveCounter counter;
  parallel_for(count, options_.workers, [&](int i) {
    results[i] = evaluate_sample(i, precision, theta, want_gradient, &counter);
  });

  UtilityValueAndGradient out;
  out.value.per_sample.resize(count);
  out.value.constants.resize(count);
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    out.value.per_sample[i] = results[i].value;
    out.value.constants[i] = samples_[i].constant;
    total += results[i].value;
  }
  out.value.value = total / count;
  out.value.counts = snapshot(counter);
  if (want_gradient) {
    const int dim = noise_->dim();
    out.gradient.per_sample.resize(dim, count);
    out.gradient.gradient = Vector::Zero(dim);
    for (int i = 0; i < count; ++i) {
      out.gradient.per_sample.col(i) = results[i].gradient;
      out.gradient.gradient += results[i].gradient;
      out.gradient.degenerate = out.gradient.degenerate || results[i].degenerate;
    }
    out.gradient.gradient /= count;
    out.gradient.counts = out.value.counts;
    if (out.gradient.degenerate) {
      log::warn("utility gradient: nearly repeated eigenvalues; the gradient may be inaccurate");
    }
  }
  return out;
}

std::string UtilityMemo::key(const Design& design, const Vector& theta) {
  std::ostringstream os;
  for (int bit : design) os << (bit ? '1' : '0');
  for (double t : theta) os << ':' << std::llround(t / 1e-12);
  return os.str();
}

std::optional<double> UtilityMemo::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void UtilityMemo::insert(const std::string& key, double value) {
  std::lock_guard lock(mutex_);
  values_.emplace(key, value);
}

void UtilityMemo::clear() {
  std::lock_guard lock(mutex_);
  values_.clear();
}

long UtilityMemo::size() const {
  std::lock_guard lock(mutex_);
  return static_cast<long>(values_.size());
}

}  // namespace roed
