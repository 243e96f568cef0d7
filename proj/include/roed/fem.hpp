#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace roed {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Nodal coefficient vector of a piecewise-bilinear field on a Grid.
using Field = Eigen::VectorXd;

namespace fem {

enum class BoundaryTag : std::uint8_t {
  kInterior,
  kDirichletBottom,
  kDirichletTop,
  kNeumannLeft,
  kNeumannRight,
};

// Uniform nx-by-ny partition of the unit square into bilinear quadrilaterals.
// Nodes are numbered row by row: node(i, j) = j * (nx + 1) + i.
class Grid {
 public:
  Grid(int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return 1.0 / nx_; }
  double hy() const { return 1.0 / ny_; }
  int num_nodes() const { return (nx_ + 1) * (ny_ + 1); }
  int num_cells() const { return nx_ * ny_; }

  int node(int i, int j) const { return j * (nx_ + 1) + i; }
  Eigen::Vector2d coordinate(int node) const;
  BoundaryTag tag(int node) const;

  // Nodes on y = 0 and y = 1, corners included.
  std::vector<int> dirichlet_nodes() const;
  std::vector<int> boundary_nodes() const;

  // Global node indices of cell (ci, cj) in local order (0,0), (1,0), (0,1), (1,1).
  std::array<int, 4> cell_nodes(int ci, int cj) const;

  struct Location {
    int ci = 0;
    int cj = 0;
    double xi = 0.0;   // local coordinate in [0, 1]
    double eta = 0.0;  // local coordinate in [0, 1]
  };
  // Cell containing p; points on a cell edge belong to the cell on their lower-left.
  Location locate(const Eigen::Vector2d& p) const;

  // Bilinear basis weights of the four cell nodes at a location.
  static std::array<double, 4> basis(double xi, double eta);

  Field interpolate(const std::function<double(double, double)>& f) const;
  double evaluate(const Field& field, const Eigen::Vector2d& p) const;

 private:
  int nx_;
  int ny_;
};

// Values at the 2x2 Gauss points of every cell, stored cell-major
// (cell index cj * nx + ci, then the 4 points in local node order).
using QuadratureField = Eigen::VectorXd;

QuadratureField to_quadrature(const Grid& grid, const Field& nodal);

SparseMatrix assemble_mass(const Grid& grid);

// Mass matrix of the whole boundary (1D line integrals over the four edges).
SparseMatrix assemble_boundary_mass(const Grid& grid);

// Matrix of (u, v) -> integral kappa * (K grad u) . grad v. Throws
// NonPositiveCoefficient unless kappa > 0 at every quadrature point.
SparseMatrix assemble_weighted_stiffness(const Grid& grid, const QuadratureField& kappa,
                                         const Eigen::Matrix2d& K = Eigen::Matrix2d::Identity());

// B(u)_{ik} = integral kappa * phi_k * grad phi_i . grad u. Its action B(u) mhat
// is the derivative of the stiffness residual K(kappa e^{mhat}) u in m along mhat,
// and B(u)^T p is the weak-form coefficient derivative integral kappa phi_k grad u . grad p.
SparseMatrix assemble_coefficient_sensitivity(const Grid& grid, const QuadratureField& kappa,
                                              const Field& u);

// Gauss-rule integral of values given at quadrature points.
double integrate(const Grid& grid, const QuadratureField& values);

struct Dirichlet {
  std::vector<int> nodes;
  std::vector<double> values;
};

enum class SolverMethod { kDirect, kConjugateGradient };

// Factorization of a symmetric matrix with a fixed set of constrained nodes,
// eliminated symmetrically. The constrained rows of a right-hand side are ignored.
// solve() is const and may be called concurrently.
class LinearSolver {
 public:
  LinearSolver(const SparseMatrix& matrix, std::vector<int> constrained,
               SolverMethod method = SolverMethod::kDirect);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  // Solves with homogeneous values on the constrained nodes.
  Vector solve(const Vector& rhs) const;
  // Solves with values[k] prescribed on constrained()[k].
  Vector solve(const Vector& rhs, std::span<const double> values) const;

  const std::vector<int>& constrained() const { return constrained_; }
  int size() const { return size_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<int> constrained_;
  int size_ = 0;
};

// One-shot convenience around LinearSolver.
Vector solve(const SparseMatrix& matrix, const Vector& rhs, const Dirichlet& dirichlet,
             SolverMethod method = SolverMethod::kDirect);

}  // namespace fem
}  // namespace roed
