#pragma once

#include <string>
#include <vector>

#include "roed/fem.hpp"

namespace roed {

// Binary sensor activation vector, one entry (0 or 1) per candidate sensor.
using Design = std::vector<int>;

int active_count(const Design& design);

// Axis-aligned parameter box.
struct Box {
  Vector lower;
  Vector upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& theta, double slack = 0.0) const;
  Vector midpoint() const { return 0.5 * (lower + upper); }
  Vector project(const Vector& theta) const;
};

enum class NoiseVariant {
  kTwoSensorCorrelated,  // theta = (sigma_1, sigma_2, rho)
  kGridExponential,      // theta = (sigma_1..sigma_Nd, ell_1, ell_2)
  kIsotropic,            // theta = (sigma), Gamma = sigma^2 I
  kFixed,                // Gamma is a constant matrix; theta has no effect
};

std::string to_string(NoiseVariant variant);
NoiseVariant noise_variant_from_string(const std::string& name);

// Design-masked pseudoinverse of diag(xi) Gamma diag(xi): the inverse of the
// active principal submatrix embedded back into Nd x Nd, zero elsewhere.
class MaskedPrecision {
 public:
  MaskedPrecision(const Matrix& covariance, const Design& design);

  const std::vector<int>& active() const { return active_; }
  const Matrix& matrix() const { return dense_; }
  const Matrix& covariance() const { return covariance_; }
  Vector apply(const Vector& v) const { return dense_ * v; }
  int size() const { return static_cast<int>(dense_.rows()); }

 private:
  std::vector<int> active_;
  Matrix covariance_;
  Matrix dense_;
};

// Parameterized observation-error covariance Gamma(theta).
class NoiseModel {
 public:
  static NoiseModel two_sensor(Box box);
  static NoiseModel grid_exponential(std::vector<Eigen::Vector2d> sensors, Box box);
  static NoiseModel isotropic(int num_sensors, Box box);
  static NoiseModel fixed(Matrix covariance);

  NoiseVariant variant() const { return variant_; }
  int num_sensors() const { return num_sensors_; }
  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }

  // Throws InvalidArgument if theta is outside the box and NotPositiveDefinite
  // if the result fails a Cholesky factorization.
  Matrix covariance(const Vector& theta) const;
  Matrix covariance_derivative(const Vector& theta, int coord) const;

  MaskedPrecision masked_precision(const Design& design, const Vector& theta) const;
  // -Gamma^+ (dGamma/dtheta_coord) Gamma^+
  Matrix d_masked_precision(const Design& design, const Vector& theta, int coord) const;
  Matrix d_masked_precision(const MaskedPrecision& precision, const Vector& theta,
                            int coord) const;

 private:
  NoiseModel(NoiseVariant variant, int num_sensors, Box box);
  void check_theta(const Vector& theta) const;

  NoiseVariant variant_;
  int num_sensors_;
  Box box_;
  std::vector<Eigen::Vector2d> sensors_;
  Matrix fixed_;
};

}  // namespace roed
