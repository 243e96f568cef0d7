#include "roed/problem.hpp"

#include <cstdio>
#include <sstream>

#include "roed/errors.hpp"
#include "roed/hash.hpp"
#include "roed/log.hpp"

namespace roed {
namespace {

void put(std::ostringstream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf << ',';
}

void add(SolveCounts& total, const SolveCounts& c) {
  total.forward_solves += c.forward_solves;
  total.prior_solves += c.prior_solves;
  total.hessian_applies += c.hessian_applies;
}

}  // namespace

std::vector<Eigen::Vector2d> sensor_grid(int nx, int ny) {
  if (nx < 1 || ny < 1) throw InvalidArgument("sensor grid needs positive counts");
  std::vector<Eigen::Vector2d> out;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) out.emplace_back((i + 0.5) / nx, (j + 0.5) / ny);
  }
  return out;
}

std::string ProblemConfig::key() const {
  std::ostringstream os;
  os << "mesh:" << nx << 'x' << ny << ";solver:" << static_cast<int>(solver) << ";prior:";
  put(os, prior.gamma);
  put(os, prior.delta);
  for (int k = 0; k < 4; ++k) put(os, prior.K(k / 2, k % 2));
  put(os, prior.robin.value_or(-1.0));
  put(os, prior_mean);
  os << ";sensors:";
  for (const auto& s : sensors) {
    put(os, s.x());
    put(os, s.y());
  }
  os << ";noise:" << to_string(variant) << ':';
  for (double v : box.lower) put(os, v);
  for (double v : box.upper) put(os, v);
  for (Eigen::Index k = 0; k < fixed_covariance.size(); ++k) put(os, fixed_covariance.data()[k]);
  os << ";saa:" << n_saa << ";seed:" << data_seed << ";map:" << map.max_iterations << ',';
  put(os, map.gradient_tolerance);
  put(os, map.armijo_c);
  os << map.max_backtracks << ',' << map.max_cg_iterations;
  return os.str();
}

NoiseModel make_noise_model(const ProblemConfig& config) {
  switch (config.variant) {
    case NoiseVariant::kTwoSensorCorrelated:
      if (config.sensors.size() != 2) {
        throw InvalidArgument("two-sensor noise model needs exactly two sensors");
      }
      return NoiseModel::two_sensor(config.box);
    case NoiseVariant::kGridExponential:
      return NoiseModel::grid_exponential(config.sensors, config.box);
    case NoiseVariant::kIsotropic:
      return NoiseModel::isotropic(static_cast<int>(config.sensors.size()), config.box);
    case NoiseVariant::kFixed:
      return NoiseModel::fixed(config.fixed_covariance);
  }
  throw InvalidArgument("unknown noise variant");
}

PdeProblem::PdeProblem(ProblemConfig config, std::optional<Vector> theta_bar)
    : config_(std::move(config)) {
  if (config_.n_saa < 1) throw InvalidArgument("n_saa must be at least 1");
  if (config_.sensors.empty()) throw InvalidArgument("no candidate sensors");
  grid_ = std::make_shared<fem::Grid>(config_.nx, config_.ny);
  prior_ = std::make_shared<GaussianPrior>(
      grid_, config_.prior, Field::Constant(grid_->num_nodes(), config_.prior_mean));
  forward_ = std::make_shared<ForwardProblem>(grid_, config_.sensors, config_.solver);
  noise_ = std::make_shared<NoiseModel>(make_noise_model(config_));
  if (noise_->num_sensors() != forward_->num_sensors()) {
    throw InvalidArgument("noise model and sensor list disagree");
  }
  rebuild(theta_bar ? *theta_bar : noise_->box().midpoint());
}

void PdeProblem::rebuild(const Vector& theta_bar) {
  if (!noise_->box().contains(theta_bar, 1e-12)) {
    throw InvalidArgument("theta_bar lies outside the parameter box");
  }
  theta_bar_ = theta_bar;
  if (!have_dataset_) {
    dataset_ = synthesize_data(*prior_, *forward_, *noise_, theta_bar, config_.n_saa,
                               config_.data_seed, config_.workers);
    have_dataset_ = true;
  } else {
    dataset_ = recolor_noise(dataset_, *noise_, theta_bar);
  }

  std::ostringstream tb;
  for (double v : theta_bar) put(tb, v);
  const std::string key = config_.key() + ";theta_bar:" + tb.str();
  const std::string name = "fixed_maps_" + hex64(fnv1a(key)) + ".json";
  std::vector<Field> points;
  from_cache_ = false;
  if (config_.cache_dir) {
    if (auto cached = load_fixed_maps(*config_.cache_dir / name, key, grid_->num_nodes())) {
      if (static_cast<int>(cached->size()) == config_.n_saa) {
        points = std::move(*cached);
        from_cache_ = true;
      }
    }
  }
  if (from_cache_) {
    maps_.clear();
    for (const Field& m : points) {
      MapResult r;
      r.m_post = m;
      r.converged = true;
      maps_.push_back(std::move(r));
    }
    log::info("fixed MAP points loaded from cache " + name);
  } else {
    maps_ = compute_fixed_maps(*prior_, *forward_, *noise_, dataset_, config_.map,
                               config_.workers);
    int unconverged = 0;
    for (const MapResult& r : maps_) {
      points.push_back(r.m_post);
      if (!r.converged) ++unconverged;
    }
    if (unconverged > 0) {
      log::warn(std::to_string(unconverged) + " of " + std::to_string(maps_.size()) +
                " MAP solves stopped before reaching the gradient tolerance");
    }
    if (config_.cache_dir) save_fixed_maps(*config_.cache_dir / name, key, points);
  }
  UtilityOptions opts = config_.utility;
  opts.workers = config_.workers;
  evaluator_ = std::make_unique<UtilityEvaluator>(
      forward_, prior_, noise_,
      UtilityEvaluator::freeze(*forward_, *prior_, points, dataset_.data, config_.workers), opts);
}

void PdeProblem::set_theta_bar(const Vector& theta_bar) { rebuild(theta_bar); }

bool PdeProblem::update_theta_bar(const Vector& theta_bar) {
  const double scale = theta_bar_.norm();
  const double change = (theta_bar - theta_bar_).norm();
  if (change <= config_.refresh_threshold * (scale > 0.0 ? scale : 1.0)) return false;
  log::info("average robust parameter moved; recomputing fixed MAP points");
  rebuild(theta_bar);
  ++refreshes_;
  return true;
}

double PdeProblem::value(const Design& design, const Vector& theta) {
  UtilityValue v = evaluator_->value(design, theta);
  add(totals_, v.counts);
  return v.value;
}

std::pair<double, Vector> PdeProblem::value_and_gradient(const Design& design,
                                                         const Vector& theta) {
  UtilityValueAndGradient vg = evaluator_->value_and_gradient(design, theta);
  add(totals_, vg.value.counts);
  return {vg.value.value, vg.gradient.gradient};
}

double PdeProblem::mean_constant() const {
  double sum = 0.0;
  for (const auto& s : evaluator_->samples()) sum += s.constant;
  return sum / evaluator_->num_samples();
}

}  // namespace roed
