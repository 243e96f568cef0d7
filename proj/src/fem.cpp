#include "roed/fem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "roed/errors.hpp"

namespace roed::fem {
namespace {

constexpr double kGaussLo = 0.5 - 0.5 / 1.7320508075688772;
constexpr double kGaussHi = 0.5 + 0.5 / 1.7320508075688772;
constexpr std::array<double, 2> kGauss = {kGaussLo, kGaussHi};

// Quadrature point q of a cell sits at (kGauss[q % 2], kGauss[q / 2]).
struct ReferenceElement {
  std::array<std::array<double, 4>, 4> phi{};   // phi[q][a]
  std::array<std::array<double, 4>, 4> dxi{};   // d phi / d xi
  std::array<std::array<double, 4>, 4> deta{};  // d phi / d eta

  ReferenceElement() {
    for (int q = 0; q < 4; ++q) {
      const double xi = kGauss[q % 2];
      const double eta = kGauss[q / 2];
      for (int a = 0; a < 4; ++a) {
        const int ax = a % 2;
        const int ay = a / 2;
        const double fx = ax ? xi : 1.0 - xi;
        const double fy = ay ? eta : 1.0 - eta;
        phi[q][a] = fx * fy;
        dxi[q][a] = (ax ? 1.0 : -1.0) * fy;
        deta[q][a] = fx * (ay ? 1.0 : -1.0);
      }
    }
  }
};

const ReferenceElement& reference() {
  static const ReferenceElement ref;
  return ref;
}

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(int n, const Triplets& t) {
  SparseMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

}  // namespace

Grid::Grid(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx < 1 || ny < 1) {
    throw InvalidArgument("grid cell counts must be positive, got " + std::to_string(nx) +
                          "x" + std::to_string(ny));
  }
}

Eigen::Vector2d Grid::coordinate(int node) const {
  const int i = node % (nx_ + 1);
  const int j = node / (nx_ + 1);
  return {i * hx(), j * hy()};
}

BoundaryTag Grid::tag(int node) const {
  const int i = node % (nx_ + 1);
  const int j = node / (nx_ + 1);
  if (j == 0) return BoundaryTag::kDirichletBottom;
  if (j == ny_) return BoundaryTag::kDirichletTop;
  if (i == 0) return BoundaryTag::kNeumannLeft;
  if (i == nx_) return BoundaryTag::kNeumannRight;
  return BoundaryTag::kInterior;
}

std::vector<int> Grid::dirichlet_nodes() const {
  std::vector<int> out;
  out.reserve(2 * (nx_ + 1));
  for (int i = 0; i <= nx_; ++i) out.push_back(node(i, 0));
  for (int i = 0; i <= nx_; ++i) out.push_back(node(i, ny_));
  return out;
}

std::vector<int> Grid::boundary_nodes() const {
  std::vector<int> out;
  for (int k = 0; k < num_nodes(); ++k) {
    if (tag(k) != BoundaryTag::kInterior) out.push_back(k);
  }
  return out;
}

std::array<int, 4> Grid::cell_nodes(int ci, int cj) const {
  return {node(ci, cj), node(ci + 1, cj), node(ci, cj + 1), node(ci + 1, cj + 1)};
}

Grid::Location Grid::locate(const Eigen::Vector2d& p) const {
  Location loc;
  const double sx = p.x() * nx_;
  const double sy = p.y() * ny_;
  loc.ci = std::clamp(static_cast<int>(std::ceil(sx)) - 1, 0, nx_ - 1);
  loc.cj = std::clamp(static_cast<int>(std::ceil(sy)) - 1, 0, ny_ - 1);
  loc.xi = sx - loc.ci;
  loc.eta = sy - loc.cj;
  return loc;
}

std::array<double, 4> Grid::basis(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
}

Field Grid::interpolate(const std::function<double(double, double)>& f) const {
  Field out(num_nodes());
  for (int k = 0; k < num_nodes(); ++k) {
    const auto x = coordinate(k);
    out[k] = f(x.x(), x.y());
  }
  return out;
}

double Grid::evaluate(const Field& field, const Eigen::Vector2d& p) const {
  const auto loc = locate(p);
  const auto nodes = cell_nodes(loc.ci, loc.cj);
  const auto w = basis(loc.xi, loc.eta);
  double v = 0.0;
  for (int a = 0; a < 4; ++a) v += w[a] * field[nodes[a]];
  return v;
}

QuadratureField to_quadrature(const Grid& grid, const Field& nodal) {
  const auto& ref = reference();
  QuadratureField out(4 * grid.num_cells());
  for (int cj = 0; cj < grid.ny(); ++cj) {
    for (int ci = 0; ci < grid.nx(); ++ci) {
      const auto nodes = grid.cell_nodes(ci, cj);
      const int c = cj * grid.nx() + ci;
      for (int q = 0; q < 4; ++q) {
        double v = 0.0;
        for (int a = 0; a < 4; ++a) v += ref.phi[q][a] * nodal[nodes[a]];
        out[4 * c + q] = v;
      }
    }
  }
  return out;
}

SparseMatrix assemble_mass(const Grid& grid) {
  const auto& ref = reference();
  const double w = grid.hx() * grid.hy() / 4.0;
  Triplets t;
  t.reserve(16 * grid.num_cells());
  for (int cj = 0; cj < grid.ny(); ++cj) {
    for (int ci = 0; ci < grid.nx(); ++ci) {
      const auto nodes = grid.cell_nodes(ci, cj);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          double v = 0.0;
          for (int q = 0; q < 4; ++q) v += w * ref.phi[q][a] * ref.phi[q][b];
          t.emplace_back(nodes[a], nodes[b], v);
        }
      }
    }
  }
  return from_triplets(grid.num_nodes(), t);
}

SparseMatrix assemble_boundary_mass(const Grid& grid) {
  // Exact 1D mass of a linear edge element of length h: h/6 [[2, 1], [1, 2]].
  Triplets t;
  auto edge = [&t](int a, int b, double h) {
    t.emplace_back(a, a, h / 3.0);
    t.emplace_back(b, b, h / 3.0);
    t.emplace_back(a, b, h / 6.0);
    t.emplace_back(b, a, h / 6.0);
  };
  for (int i = 0; i < grid.nx(); ++i) {
    edge(grid.node(i, 0), grid.node(i + 1, 0), grid.hx());
    edge(grid.node(i, grid.ny()), grid.node(i + 1, grid.ny()), grid.hx());
  }
  for (int j = 0; j < grid.ny(); ++j) {
    edge(grid.node(0, j), grid.node(0, j + 1), grid.hy());
    edge(grid.node(grid.nx(), j), grid.node(grid.nx(), j + 1), grid.hy());
  }
  return from_triplets(grid.num_nodes(), t);
}

SparseMatrix assemble_weighted_stiffness(const Grid& grid, const QuadratureField& kappa,
                                         const Eigen::Matrix2d& K) {
  if (kappa.size() != 4 * grid.num_cells()) {
    throw InvalidArgument("coefficient must be given at every quadrature point");
  }
  if (!(kappa.array() > 0.0).all() || !kappa.allFinite()) {
    throw NonPositiveCoefficient("diffusion coefficient must be positive and finite");
  }
  const auto& ref = reference();
  const double w = grid.hx() * grid.hy() / 4.0;
  const double ix = 1.0 / grid.hx();
  const double iy = 1.0 / grid.hy();
  Triplets t;
  t.reserve(16 * grid.num_cells());
  for (int cj = 0; cj < grid.ny(); ++cj) {
    for (int ci = 0; ci < grid.nx(); ++ci) {
      const auto nodes = grid.cell_nodes(ci, cj);
      const int c = cj * grid.nx() + ci;
      Eigen::Matrix4d local = Eigen::Matrix4d::Zero();
      for (int q = 0; q < 4; ++q) {
        const double kq = w * kappa[4 * c + q];
        for (int a = 0; a < 4; ++a) {
          const Eigen::Vector2d ga(ref.dxi[q][a] * ix, ref.deta[q][a] * iy);
          const Eigen::Vector2d Kga = K * ga;
          for (int b = 0; b < 4; ++b) {
            const Eigen::Vector2d gb(ref.dxi[q][b] * ix, ref.deta[q][b] * iy);
            local(a, b) += kq * Kga.dot(gb);
          }
        }
      }
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) t.emplace_back(nodes[a], nodes[b], local(a, b));
      }
    }
  }
  return from_triplets(grid.num_nodes(), t);
}

SparseMatrix assemble_coefficient_sensitivity(const Grid& grid, const QuadratureField& kappa,
                                              const Field& u) {
  const auto& ref = reference();
  const double w = grid.hx() * grid.hy() / 4.0;
  const double ix = 1.0 / grid.hx();
  const double iy = 1.0 / grid.hy();
  Triplets t;
  t.reserve(16 * grid.num_cells());
  for (int cj = 0; cj < grid.ny(); ++cj) {
    for (int ci = 0; ci < grid.nx(); ++ci) {
      const auto nodes = grid.cell_nodes(ci, cj);
      const int c = cj * grid.nx() + ci;
      Eigen::Matrix4d local = Eigen::Matrix4d::Zero();
      for (int q = 0; q < 4; ++q) {
        Eigen::Vector2d gu = Eigen::Vector2d::Zero();
        for (int a = 0; a < 4; ++a) {
          gu += u[nodes[a]] * Eigen::Vector2d(ref.dxi[q][a] * ix, ref.deta[q][a] * iy);
        }
        const double kq = w * kappa[4 * c + q];
        for (int i = 0; i < 4; ++i) {
          const double gi = ref.dxi[q][i] * ix * gu.x() + ref.deta[q][i] * iy * gu.y();
          for (int k = 0; k < 4; ++k) local(i, k) += kq * ref.phi[q][k] * gi;
        }
      }
      for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < 4; ++k) t.emplace_back(nodes[i], nodes[k], local(i, k));
      }
    }
  }
  SparseMatrix B(grid.num_nodes(), grid.num_nodes());
  B.setFromTriplets(t.begin(), t.end());
  B.makeCompressed();
  return B;
}

double integrate(const Grid& grid, const QuadratureField& values) {
  return values.sum() * grid.hx() * grid.hy() / 4.0;
}

// ---------------------------------------------------------------------------

struct LinearSolver::Impl {
  std::vector<int> free;       // free dof -> global index
  std::vector<int> reduced;    // global index -> free dof, or -1
  SparseMatrix coupling;       // free rows, constrained columns
  SolverMethod method;
  Eigen::SimplicialLLT<SparseMatrix> llt;
  Eigen::DiagonalPreconditioner<double> jacobi;
  SparseMatrix reduced_matrix;
};

LinearSolver::LinearSolver(const SparseMatrix& matrix, std::vector<int> constrained,
                           SolverMethod method)
    : impl_(std::make_unique<Impl>()), constrained_(std::move(constrained)),
      size_(static_cast<int>(matrix.rows())) {
  if (matrix.rows() != matrix.cols()) throw InvalidArgument("matrix must be square");
  auto& im = *impl_;
  im.method = method;
  im.reduced.assign(size_, -1);
  std::vector<int> constrained_pos(size_, -1);
  for (std::size_t k = 0; k < constrained_.size(); ++k) constrained_pos[constrained_[k]] = k;
  for (int i = 0; i < size_; ++i) {
    if (constrained_pos[i] < 0) {
      im.reduced[i] = static_cast<int>(im.free.size());
      im.free.push_back(i);
    }
  }
  const int nf = static_cast<int>(im.free.size());
  const int nc = static_cast<int>(constrained_.size());
  Triplets ff, fc;
  for (int col = 0; col < matrix.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
      const int r = im.reduced[it.row()];
      if (r < 0) continue;
      if (im.reduced[col] >= 0) {
        ff.emplace_back(r, im.reduced[col], it.value());
      } else {
        fc.emplace_back(r, constrained_pos[col], it.value());
      }
    }
  }
  im.reduced_matrix.resize(nf, nf);
  im.reduced_matrix.setFromTriplets(ff.begin(), ff.end());
  im.reduced_matrix.makeCompressed();
  im.coupling.resize(nf, nc);
  im.coupling.setFromTriplets(fc.begin(), fc.end());
  if (nf == 0) return;
  if (method == SolverMethod::kDirect) {
    im.llt.compute(im.reduced_matrix);
    if (im.llt.info() != Eigen::Success) {
      throw SingularSystem("sparse Cholesky factorization failed");
    }
  } else {
    im.jacobi.compute(im.reduced_matrix);
  }
}

LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

Vector LinearSolver::solve(const Vector& rhs) const {
  return solve(rhs, std::span<const double>{});
}

Vector LinearSolver::solve(const Vector& rhs, std::span<const double> values) const {
  if (rhs.size() != size_) throw InvalidArgument("right-hand side has the wrong length");
  const auto& im = *impl_;
  const int nf = static_cast<int>(im.free.size());
  Vector out = Vector::Zero(size_);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(constrained_.size()));
  if (!values.empty()) {
    if (values.size() != constrained_.size()) {
      throw InvalidArgument("one prescribed value per constrained node is required");
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      g[k] = values[k];
      out[constrained_[k]] = values[k];
    }
  }
  if (nf == 0) return out;
  Vector b(nf);
  for (int r = 0; r < nf; ++r) b[r] = rhs[im.free[r]];
  if (!values.empty()) b -= im.coupling * g;
  Vector x;
  if (im.method == SolverMethod::kDirect) {
    x = im.llt.solve(b);
  } else {
    // The free function keeps no state, so concurrent solves are safe.
    x = Vector::Zero(nf);
    Eigen::Index iterations = 10 * nf + 100;
    double error = 1e-14;
    Eigen::internal::conjugate_gradient(im.reduced_matrix.selfadjointView<Eigen::Lower>(), b, x,
                                        im.jacobi, iterations, error);
    if (error > 1e-10) throw SingularSystem("CG did not converge");
  }
  if (!x.allFinite()) throw SingularSystem("solution is not finite");
  for (int r = 0; r < nf; ++r) out[im.free[r]] = x[r];
  return out;
}

Vector solve(const SparseMatrix& matrix, const Vector& rhs, const Dirichlet& dirichlet,
             SolverMethod method) {
  LinearSolver solver(matrix, dirichlet.nodes, method);
  return solver.solve(rhs, dirichlet.values);
}

}  // namespace roed::fem
