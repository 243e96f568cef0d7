#include "roed/noise.hpp"

#include <cmath>
#include <numeric>

#include "roed/errors.hpp"

namespace roed {

int active_count(const Design& design) {
  return std::accumulate(design.begin(), design.end(), 0);
}

bool Box::contains(const Vector& theta, double slack) const {
  if (theta.size() != lower.size()) return false;
  return ((theta - lower).array() >= -slack).all() && ((upper - theta).array() >= -slack).all();
}

Vector Box::project(const Vector& theta) const {
  return theta.cwiseMax(lower).cwiseMin(upper);
}

std::string to_string(NoiseVariant variant) {
  switch (variant) {
    case NoiseVariant::kTwoSensorCorrelated: return "two_sensor_correlated";
    case NoiseVariant::kGridExponential: return "grid_exponential";
    case NoiseVariant::kIsotropic: return "isotropic";
    case NoiseVariant::kFixed: return "fixed";
  }
  return "unknown";
}

NoiseVariant noise_variant_from_string(const std::string& name) {
  if (name == "two_sensor_correlated") return NoiseVariant::kTwoSensorCorrelated;
  if (name == "grid_exponential") return NoiseVariant::kGridExponential;
  if (name == "isotropic") return NoiseVariant::kIsotropic;
  if (name == "fixed") return NoiseVariant::kFixed;
  throw InvalidArgument("unknown noise variant '" + name + "'");
}

MaskedPrecision::MaskedPrecision(const Matrix& covariance, const Design& design)
    : covariance_(covariance) {
  const int n = static_cast<int>(covariance.rows());
  if (static_cast<int>(design.size()) != n) {
    throw InvalidArgument("design length does not match the number of sensors");
  }
  for (int i = 0; i < n; ++i) {
    if (design[i] != 0 && design[i] != 1) throw InvalidArgument("design entries must be 0 or 1");
    if (design[i]) active_.push_back(i);
  }
  if (active_.empty()) throw EmptyDesign("at least one sensor must be active");
  const int k = static_cast<int>(active_.size());
  Matrix sub(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) sub(a, b) = covariance(active_[a], active_[b]);
  }
  Eigen::LLT<Matrix> llt(sub);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("active block of the noise covariance is not positive definite");
  }
  const Matrix inv = llt.solve(Matrix::Identity(k, k));
  dense_ = Matrix::Zero(n, n);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) dense_(active_[a], active_[b]) = 0.5 * (inv(a, b) + inv(b, a));
  }
}

NoiseModel::NoiseModel(NoiseVariant variant, int num_sensors, Box box)
    : variant_(variant), num_sensors_(num_sensors), box_(std::move(box)) {
  if (box_.lower.size() != box_.upper.size()) throw InvalidArgument("box bounds differ in size");
  if (!((box_.upper - box_.lower).array() >= 0.0).all()) {
    throw InvalidArgument("box lower bound exceeds upper bound");
  }
}

NoiseModel NoiseModel::two_sensor(Box box) {
  if (box.dim() != 3) throw InvalidArgument("two-sensor noise model has 3 parameters");
  if (box.lower[0] <= 0 || box.lower[1] <= 0) throw InvalidArgument("sigma must be positive");
  if (box.lower[2] <= -1 || box.upper[2] >= 1) throw InvalidArgument("rho must lie in (-1, 1)");
  NoiseModel model(NoiseVariant::kTwoSensorCorrelated, 2, std::move(box));
  model.covariance(model.box_.midpoint());
  return model;
}

NoiseModel NoiseModel::grid_exponential(std::vector<Eigen::Vector2d> sensors, Box box) {
  const int n = static_cast<int>(sensors.size());
  if (n < 1) throw InvalidArgument("at least one sensor is required");
  if (box.dim() != n + 2) {
    throw InvalidArgument("grid-exponential noise model needs Nd + 2 parameters");
  }
  if ((box.lower.array() <= 0.0).any()) throw InvalidArgument("parameters must be positive");
  NoiseModel model(NoiseVariant::kGridExponential, n, std::move(box));
  model.sensors_ = std::move(sensors);
  model.covariance(model.box_.midpoint());
  return model;
}

NoiseModel NoiseModel::isotropic(int num_sensors, Box box) {
  if (box.dim() != 1) throw InvalidArgument("isotropic noise model has 1 parameter");
  if (box.lower[0] <= 0) throw InvalidArgument("sigma must be positive");
  return NoiseModel(NoiseVariant::kIsotropic, num_sensors, std::move(box));
}

NoiseModel NoiseModel::fixed(Matrix covariance) {
  Box box{Vector::Zero(1), Vector::Ones(1)};
  NoiseModel model(NoiseVariant::kFixed, static_cast<int>(covariance.rows()), std::move(box));
  if (covariance.rows() != covariance.cols()) throw InvalidArgument("covariance must be square");
  if (Eigen::LLT<Matrix>(covariance).info() != Eigen::Success) {
    throw NotPositiveDefinite("fixed noise covariance is not positive definite");
  }
  model.fixed_ = std::move(covariance);
  return model;
}

void NoiseModel::check_theta(const Vector& theta) const {
  if (theta.size() != box_.dim()) throw InvalidArgument("theta has the wrong dimension");
  if (!box_.contains(theta, 1e-12)) throw InvalidArgument("theta lies outside its box");
}

Matrix NoiseModel::covariance(const Vector& theta) const {
  check_theta(theta);
  const int n = num_sensors_;
  Matrix G(n, n);
  switch (variant_) {
    case NoiseVariant::kTwoSensorCorrelated: {
      const double s1 = theta[0], s2 = theta[1], rho = theta[2];
      G << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
      break;
    }
    case NoiseVariant::kGridExponential: {
      const double l1 = theta[n], l2 = theta[n + 1];
      for (int i = 0; i < n; ++i) {
        G(i, i) = theta[i] * theta[i];
        for (int j = 0; j < i; ++j) {
          const Eigen::Vector2d d = (sensors_[i] - sensors_[j]).cwiseAbs();
          const double rho = std::exp(-d.x() / (2 * l1) - d.y() / (2 * l2));
          G(i, j) = G(j, i) = theta[i] * theta[j] * rho;
        }
      }
      break;
    }
    case NoiseVariant::kIsotropic:
      G = theta[0] * theta[0] * Matrix::Identity(n, n);
      break;
    case NoiseVariant::kFixed:
      G = fixed_;
      break;
  }
  if (variant_ != NoiseVariant::kFixed && Eigen::LLT<Matrix>(G).info() != Eigen::Success) {
    throw NotPositiveDefinite("noise covariance is not positive definite at this theta");
  }
  return G;
}

Matrix NoiseModel::covariance_derivative(const Vector& theta, int coord) const {
  check_theta(theta);
  if (coord < 0 || coord >= dim()) throw InvalidArgument("parameter index out of range");
  const int n = num_sensors_;
  Matrix D = Matrix::Zero(n, n);
  switch (variant_) {
    case NoiseVariant::kTwoSensorCorrelated: {
      const double s1 = theta[0], s2 = theta[1], rho = theta[2];
      if (coord == 0) {
        D << 2 * s1, rho * s2, rho * s2, 0;
      } else if (coord == 1) {
        D << 0, rho * s1, rho * s1, 2 * s2;
      } else {
        D << 0, s1 * s2, s1 * s2, 0;
      }
      break;
    }
    case NoiseVariant::kGridExponential: {
      const double l1 = theta[n], l2 = theta[n + 1];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) {
            if (coord == i) D(i, i) = 2 * theta[i];
            continue;
          }
          const Eigen::Vector2d d = (sensors_[i] - sensors_[j]).cwiseAbs();
          const double rho = std::exp(-d.x() / (2 * l1) - d.y() / (2 * l2));
          if (coord < n) {
            if (coord == i) D(i, j) += theta[j] * rho;
            if (coord == j) D(i, j) += theta[i] * rho;
          } else if (coord == n) {
            D(i, j) = theta[i] * theta[j] * rho * d.x() / (2 * l1 * l1);
          } else {
            D(i, j) = theta[i] * theta[j] * rho * d.y() / (2 * l2 * l2);
          }
        }
      }
      break;
    }
    case NoiseVariant::kIsotropic:
      D = 2 * theta[0] * Matrix::Identity(n, n);
      break;
    case NoiseVariant::kFixed:
      break;
  }
  return D;
}

MaskedPrecision NoiseModel::masked_precision(const Design& design, const Vector& theta) const {
  return MaskedPrecision(covariance(theta), design);
}

Matrix NoiseModel::d_masked_precision(const Design& design, const Vector& theta,
                                      int coord) const {
  return d_masked_precision(masked_precision(design, theta), theta, coord);
}

Matrix NoiseModel::d_masked_precision(const MaskedPrecision& precision, const Vector& theta,
                                      int coord) const {
  const Matrix& P = precision.matrix();
  return -P * covariance_derivative(theta, coord) * P;
}

}  // namespace roed
