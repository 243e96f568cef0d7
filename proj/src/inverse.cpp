#include "roed/inverse.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "roed/errors.hpp"
#include "roed/parallel.hpp"

namespace roed {
namespace {

std::mt19937_64 stream(std::uint64_t seed, int index, int purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

Matrix noise_factor(const NoiseModel& noise, const Vector& theta_bar) {
  Eigen::LLT<Matrix> llt(noise.covariance(theta_bar));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("noise covariance at theta_bar");
  return llt.matrixL();
}

double m_norm(const GaussianPrior& prior, const Vector& dual) {
  return std::sqrt(std::max(0.0, dual.dot(prior.solve_mass(dual))));
}

}  // namespace

SyntheticDataset synthesize_data(const GaussianPrior& prior, const ForwardProblem& forward,
                                 const NoiseModel& noise, const Vector& theta_bar, int count,
                                 std::uint64_t seed, int workers) {
  if (count < 1) throw InvalidArgument("the number of samples must be at least 1");
  if (noise.num_sensors() != forward.num_sensors()) {
    throw InvalidArgument("noise model and forward problem disagree on the sensor count");
  }
  const Matrix L = noise_factor(noise, theta_bar);
  SyntheticDataset ds;
  ds.seed = seed;
  ds.theta_bar = theta_bar;
  ds.parameters.resize(count);
  ds.standard_normals.resize(count);
  ds.noise.resize(count);
  ds.data.resize(count);
  const int nd = forward.num_sensors();
  parallel_for(count, workers, [&](int i) {
    auto prior_rng = stream(seed, i, 0);
    ds.parameters[i] = prior.sample(prior_rng);
    auto noise_rng = stream(seed, i, 1);
    std::normal_distribution<double> normal;
    Vector z(nd);
    for (int k = 0; k < nd; ++k) z[k] = normal(noise_rng);
    ds.standard_normals[i] = z;
    ds.noise[i] = L * z;
    ds.data[i] = forward.parameter_to_observable(ds.parameters[i]) + ds.noise[i];
  });
  return ds;
}

SyntheticDataset recolor_noise(const SyntheticDataset& dataset, const NoiseModel& noise,
                               const Vector& theta_bar) {
  const Matrix L = noise_factor(noise, theta_bar);
  SyntheticDataset out = dataset;
  out.theta_bar = theta_bar;
  for (int i = 0; i < out.size(); ++i) {
    const Vector eta = L * out.standard_normals[i];
    out.data[i] += eta - out.noise[i];
    out.noise[i] = eta;
  }
  return out;
}

MapObjective::MapObjective(const ForwardProblem& forward, const GaussianPrior& prior,
                           Matrix precision, Vector data, double prior_weight)
    : forward_(&forward), prior_(&prior), precision_(std::move(precision)),
      data_(std::move(data)), prior_weight_(prior_weight) {
  if (data_.size() != forward.num_sensors()) throw InvalidArgument("data has the wrong length");
  if (precision_.rows() != data_.size() || precision_.cols() != data_.size()) {
    throw InvalidArgument("precision has the wrong size");
  }
}

MapObjective::Evaluation MapObjective::evaluate(const Linearization& lin) const {
  const Vector r = data_ - forward_->observe(lin.state());
  const Field dm = lin.parameter() - prior_->mean();
  return {0.5 * r.dot(precision_ * r), 0.5 * prior_weight_ * prior_->cm_norm_sq(dm)};
}

MapObjective::Evaluation MapObjective::evaluate(const Field& m) const {
  return evaluate(*forward_->linearize(m));
}

MapObjective::Gradient MapObjective::gradient_parts(const Linearization& lin) const {
  const Vector r = data_ - forward_->observe(lin.state());
  const Field p = lin.solve_adjoint(precision_ * r);
  return {prior_weight_ * prior_->apply_precision(lin.parameter() - prior_->mean()),
          lin.coefficient_gradient(p)};
}

Field MapObjective::gradient(const Linearization& lin) const {
  return prior_->solve_mass(gradient_parts(lin).dual());
}

Vector MapObjective::hessian_apply(const Linearization& lin, const Field& v) const {
  return lin.gn_hessian_form_apply(precision_, v) + prior_weight_ * prior_->apply_precision(v);
}

Field gradient_map_objective(const ForwardProblem& forward, const GaussianPrior& prior,
                             const Field& m, const Vector& data, const MaskedPrecision& noise) {
  MapObjective objective(forward, prior, noise.matrix(), data);
  return objective.gradient(*forward.linearize(m));
}

MapResult solve_map(const ForwardProblem& forward, const GaussianPrior& prior,
                    const MaskedPrecision& noise, const Vector& data, const Field& m0,
                    const MapOptions& options) {
  return solve_map(MapObjective(forward, prior, noise.matrix(), data), m0, options);
}

MapResult solve_map(const MapObjective& objective, const Field& m0, const MapOptions& options) {
  const auto& forward = objective.forward();
  const auto& prior = objective.prior();
  const double w = objective.prior_weight();

  MapResult result;
  result.m_post = m0;
  auto lin = forward.linearize(m0);
  double phi = objective.evaluate(*lin).value();
  Vector g = objective.gradient_parts(*lin).dual();
  double gnorm = m_norm(prior, g);
  result.initial_gradient_norm = gnorm;
  const double target = options.gradient_tolerance * std::max(1.0, gnorm);

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (gnorm <= target) {
      result.converged = true;
      break;
    }
    // Preconditioned CG on (H + wR) d = -g with preconditioner (wR)^{-1}.
    const double forcing = std::min(0.5, std::sqrt(gnorm / result.initial_gradient_norm));
    Vector d = Vector::Zero(g.size());
    Vector r = -g;
    Vector z = prior.apply_precision_inverse(r) / w;
    Vector s = z;
    double rz = r.dot(z);
    const double rz0 = rz;
    for (int k = 0; k < options.max_cg_iterations; ++k) {
      const Vector Hs = objective.hessian_apply(*lin, s);
      const double curvature = s.dot(Hs);
      if (curvature <= 0.0) {
        if (k == 0) d = s;
        break;
      }
      const double alpha = rz / curvature;
      d += alpha * s;
      r -= alpha * Hs;
      z = prior.apply_precision_inverse(r) / w;
      const double rz_next = r.dot(z);
      if (std::sqrt(std::max(rz_next, 0.0) / rz0) <= forcing) break;
      s = z + (rz_next / rz) * s;
      rz = rz_next;
    }

    const double slope = g.dot(d);
    double step = 1.0;
    bool accepted = false;
    std::shared_ptr<const Linearization> trial;
    double phi_trial = phi;
    for (int b = 0; b <= options.max_backtracks; ++b) {
      const Field m_trial = lin->parameter() + step * d;
      try {
        trial = forward.linearize(m_trial);
        phi_trial = objective.evaluate(*trial).value();
      } catch (const NonPositiveCoefficient&) {
        phi_trial = INFINITY;
      }
      if (std::isfinite(phi_trial) && phi_trial <= phi + options.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.line_search_failed = true;
      break;
    }
    lin = trial;
    phi = phi_trial;
    g = objective.gradient_parts(*lin).dual();
    gnorm = m_norm(prior, g);
  }
  if (!result.converged && gnorm <= target) result.converged = true;
  result.m_post = lin->parameter();
  result.objective = phi;
  result.gradient_norm = gnorm;
  result.iterations = it;
  return result;
}

std::vector<MapResult> compute_fixed_maps(const GaussianPrior& prior,
                                          const ForwardProblem& forward,
                                          const NoiseModel& noise,
                                          const SyntheticDataset& dataset,
                                          const MapOptions& options, int workers) {
  const Design all(noise.num_sensors(), 1);
  const MaskedPrecision precision = noise.masked_precision(all, dataset.theta_bar);
  std::vector<MapResult> out(dataset.size());
  parallel_for(dataset.size(), workers, [&](int i) {
    out[i] = solve_map(forward, prior, precision, dataset.data[i], prior.mean(), options);
  });
  return out;
}

void save_fixed_maps(const std::filesystem::path& path, const std::string& key,
                     const std::vector<Field>& maps) {
  nlohmann::json j;
  j["format"] = "roed-fixed-maps/1";
  j["key"] = key;
  j["num_nodes"] = maps.empty() ? 0 : maps.front().size();
  auto& arr = j["maps"] = nlohmann::json::array();
  for (const auto& m : maps) arr.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write fixed-MAP cache " + path.string());
  out << j.dump();
}

std::optional<std::vector<Field>> load_fixed_maps(const std::filesystem::path& path,
                                                  const std::string& key, int num_nodes) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (j.value("format", "") != "roed-fixed-maps/1" || j.value("key", "") != key ||
      j.value("num_nodes", -1) != num_nodes) {
    return std::nullopt;
  }
  std::vector<Field> maps;
  for (const auto& row : j.at("maps")) {
    const auto values = row.get<std::vector<double>>();
    if (static_cast<int>(values.size()) != num_nodes) return std::nullopt;
    maps.push_back(Eigen::Map<const Vector>(values.data(), num_nodes));
  }
  return maps;
}

}  // namespace roed
