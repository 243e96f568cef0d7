// Dense reference computations shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "roed/forward.hpp"
#include "roed/noise.hpp"
#include "roed/prior.hpp"
#include "roed/utility.hpp"

namespace oracle {

using roed::Matrix;
using roed::Vector;

inline Vector random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Smooth test field on the grid.
inline roed::Field smooth_field(const roed::fem::Grid& grid, double a = 0.5, double b = 1.0) {
  return grid.interpolate([&](double x, double y) {
    return a * std::sin(M_PI * x) * std::cos(b * M_PI * y) + 0.3 * x * y - 0.1;
  });
}

// Dense Jacobian of m -> Q u(m): row i is J^T e_i built from one adjoint solve.
inline Matrix dense_jacobian(const roed::Linearization& lin) {
  const int nd = lin.num_sensors();
  const int n = static_cast<int>(lin.parameter().size());
  Matrix J(nd, n);
  for (int i = 0; i < nd; ++i) {
    Vector e = Vector::Zero(nd);
    e[i] = 1.0;
    const roed::Field p = lin.solve_adjoint(e);
    J.row(i) = -(lin.coefficient_sensitivity().transpose() * p).transpose();
  }
  return J;
}

inline Matrix dense(const roed::SparseMatrix& s) { return Matrix(s); }

// S = L^T A^{-1} H A^{-1} L with M = L L^T: similar to the preconditioned Hessian.
inline Matrix symmetric_preconditioned_hessian(const roed::GaussianPrior& prior,
                                               const Matrix& hessian_form) {
  const Matrix A = dense(prior.operator_matrix());
  const Matrix M = dense(prior.mass());
  const Matrix L = Eigen::LLT<Matrix>(M).matrixL();
  const Eigen::PartialPivLU<Matrix> lu(A);
  const Matrix AiL = lu.solve(L);
  Matrix S = AiL.transpose() * hessian_form * AiL;
  return 0.5 * (S + S.transpose());
}

inline Vector descending_eigenvalues(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  Vector v = eig.eigenvalues().reverse();
  return v;
}

// 1/2 [logdet(I + S) - tr(S (I + S)^{-1})] + c
inline double dense_info_gain(const Matrix& S, double c) {
  const int n = static_cast<int>(S.rows());
  const Matrix I = Matrix::Identity(n, n);
  const Eigen::LLT<Matrix> llt(I + S);
  const Matrix L = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(L(i, i));
  const double tr = (S * llt.solve(I)).trace();
  return 0.5 * (logdet - tr) + c;
}

// Dense Gauss-Newton Hessian form J^T P J.
inline Matrix dense_hessian_form(const roed::Linearization& lin, const Matrix& precision) {
  const Matrix J = dense_jacobian(lin);
  return J.transpose() * precision * J;
}

// Moore-Penrose pseudoinverse by SVD.
inline Matrix pinv(const Matrix& A, double tol = 1e-12) {
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector s = svd.singularValues();
  const double cut = tol * (s.size() ? s[0] : 0.0);
  for (int i = 0; i < s.size(); ++i) s[i] = s[i] > cut ? 1.0 / s[i] : 0.0;
  return svd.matrixV() * s.asDiagonal() * svd.matrixU().transpose();
}

// Brute-force elementary symmetric polynomial.
inline double brute_r(int k, const Vector& w) {
  const int n = static_cast<int>(w.size());
  double sum = 0.0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    double prod = 1.0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) prod *= w[i];
    sum += prod;
  }
  return sum;
}

// All designs of length n with exactly k ones.
inline std::vector<roed::Design> all_designs(int n, int k) {
  std::vector<roed::Design> out;
  for (int mask = 0; mask < (1 << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    roed::Design d(n);
    for (int i = 0; i < n; ++i) d[i] = mask >> i & 1;
    out.push_back(d);
  }
  return out;
}

// Upper-tail probability of a chi-square variable (regularized gamma Q).
inline double chi_square_sf(double x, int dof) {
  const double a = 0.5 * dof;
  const double z = 0.5 * x;
  if (z <= 0.0) return 1.0;
  if (z < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - std::lgamma(a));
  }
  // Continued fraction (Lentz).
  double b = z + 1.0 - a;
  double c = 1.0 / 1e-300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(-z + a * std::log(z) - std::lgamma(a)) * h;
}

}  // namespace oracle
