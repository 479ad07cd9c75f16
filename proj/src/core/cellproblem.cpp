#include "core/cellproblem.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

namespace {

using Triplet = Eigen::Triplet<double>;

constexpr double kStiff[2][2] = {{1.0, -1.0}, {-1.0, 1.0}};
constexpr double kMass[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};

double coefficient_at(const PeriodicCoefficient* P, int m, std::size_t e) {
  return P ? P->value(m, e) : 1.0;
}

}  // namespace

CellOperator::CellOperator(const CellGrid& grid, const PeriodicCoefficient* coefficient) : grid_(&grid) {
  const int d = grid.dim();
  if (coefficient && (coefficient->dim() != d || coefficient->element_count() != grid.element_count()))
    fail(ErrorKind::Input, "coefficient samples do not match the cell grid");

  node_to_dof_.assign(grid.node_count(), -1);
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    if (!grid.active_nodes()[node]) continue;
    node_to_dof_[node] = static_cast<long>(dof_to_node_.size());
    dof_to_node_.push_back(node);
  }
  const auto ndof = static_cast<Eigen::Index>(dof_to_node_.size());

  std::vector<std::vector<Triplet>> triplets(static_cast<std::size_t>(d));
  load_.assign(static_cast<std::size_t>(d), Vector::Zero(ndof));
  mass_ = Vector::Zero(ndof);
  const double hx = grid.spacing(0);
  const double hy = d == 2 ? grid.spacing(1) : 1.0;
  const double vol = grid.element_volume();
  const int npe = grid.nodes_per_element();

  for (std::size_t e = 0; e < grid.element_count(); ++e) {
    if (!grid.fluid(e)) continue;
    const auto nodes = grid.element_nodes(e);
    long dofs[4];
    for (int a = 0; a < npe; ++a) dofs[a] = node_to_dof_[nodes[static_cast<std::size_t>(a)]];
    for (int a = 0; a < npe; ++a) mass_[dofs[a]] += vol / npe;

    if (d == 1) {
      const double px = coefficient_at(coefficient, 0, e);
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) triplets[0].emplace_back(dofs[a], dofs[b], px / hx * kStiff[a][b]);
        load_[0][dofs[a]] -= px * (a == 0 ? -1.0 : 1.0);
      }
      continue;
    }
    const double px = coefficient_at(coefficient, 0, e);
    const double py = coefficient_at(coefficient, 1, e);
    for (int a = 0; a < 4; ++a) {
      const int ax = a & 1, ay = a >> 1;
      for (int b = 0; b < 4; ++b) {
        const int bx = b & 1, by = b >> 1;
        triplets[0].emplace_back(dofs[a], dofs[b], px * hy / hx * kStiff[ax][bx] * kMass[ay][by]);
        triplets[1].emplace_back(dofs[a], dofs[b], py * hx / hy * kMass[ax][bx] * kStiff[ay][by]);
      }
      load_[0][dofs[a]] -= px * (ax == 0 ? -1.0 : 1.0) * 0.5 * hy;
      load_[1][dofs[a]] -= py * (ay == 0 ? -1.0 : 1.0) * 0.5 * hx;
    }
  }
  for (int m = 0; m < d; ++m) {
    SparseMatrix K(ndof, ndof);
    K.setFromTriplets(triplets[static_cast<std::size_t>(m)].begin(), triplets[static_cast<std::size_t>(m)].end());
    K.makeCompressed();
    stiffness_.push_back(std::move(K));
  }
}

SparseMatrix CellOperator::laplacian() const {
  SparseMatrix L = stiffness_[0];
  for (std::size_t m = 1; m < stiffness_.size(); ++m) L += stiffness_[m];
  return L;
}

Vector CellOperator::to_nodes(const Vector& dofs) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(grid_->node_count()));
  for (std::size_t k = 0; k < dof_to_node_.size(); ++k) out[static_cast<Eigen::Index>(dof_to_node_[k])] = dofs[static_cast<Eigen::Index>(k)];
  return out;
}

double CellSolutionSet::max_norm() const {
  double m = 0.0;
  for (const auto& f : fields) m = std::max(m, f.lpNorm<Eigen::Infinity>());
  return m;
}

namespace {

/// Euclidean projection onto the complement of per-block constants.
Projection block_mean_projection(Eigen::Index block, int blocks) {
  return [block, blocks](Vector& v) {
    for (int j = 0; j < blocks; ++j) {
      auto seg = v.segment(j * block, block);
      seg.array() -= seg.mean();
    }
  };
}

/// Shifts each block to zero lumped-mass mean.
void remove_weighted_mean(Vector& x, const Vector& mass, int blocks) {
  const auto nd = mass.size();
  const double total = mass.sum();
  for (int j = 0; j < blocks; ++j) {
    auto seg = x.segment(j * nd, nd);
    seg.array() -= mass.dot(seg) / total;
  }
}

Vector guess_to_dofs(const CellOperator& op, const Vector& nodes, int blocks) {
  const auto nd = static_cast<Eigen::Index>(op.dof_count());
  const auto nn = static_cast<Eigen::Index>(op.grid().node_count());
  if (nodes.size() != nn * blocks) fail(ErrorKind::Input, "initial guess has the wrong size");
  Vector x(nd * blocks);
  for (int j = 0; j < blocks; ++j) {
    for (Eigen::Index k = 0; k < nd; ++k) x[j * nd + k] = nodes[j * nn + static_cast<Eigen::Index>(op.node_of(static_cast<std::size_t>(k)))];
  }
  return x;
}

Vector dofs_to_nodes(const CellOperator& op, const Vector& x, int blocks) {
  const auto nd = static_cast<Eigen::Index>(op.dof_count());
  const auto nn = static_cast<Eigen::Index>(op.grid().node_count());
  Vector out = Vector::Zero(nn * blocks);
  for (int j = 0; j < blocks; ++j) out.segment(j * nn, nn) = op.to_nodes(x.segment(j * nd, nd));
  return out;
}

[[noreturn]] void not_converged(const char* what, const KrylovResult& r) {
  throw SolverError(ErrorKind::Solver,
                    fmt::format("{} cell solve did not converge: relative residual {:.3e} after {} iterations", what,
                                r.residual, r.iterations),
                    r.residual);
}

CellSolutionSet solve_scalar_impl(const PeriodicCoefficient* P, const CellGrid& grid,
                                  const CellSolveOptions& options) {
  const CellOperator op(grid, P);
  const SparseMatrix A = op.laplacian();
  const auto project = block_mean_projection(static_cast<Eigen::Index>(op.dof_count()), 1);
  CellSolutionSet out{CellSolutionSet::Kind::Scalar, grid, 1, 0.0, {}, {}, {}, "cg"};
  for (int l = 0; l < grid.dim(); ++l) {
    Vector x = static_cast<std::size_t>(l) < options.initial_guesses.size()
                   ? guess_to_dofs(op, options.initial_guesses[static_cast<std::size_t>(l)], 1)
                   : Vector::Zero(static_cast<Eigen::Index>(op.dof_count()));
    const auto r = projected_cg(A, op.load(l), x, project, options.krylov);
    if (!r.converged) not_converged("scalar", r);
    remove_weighted_mean(x, op.mass(), 1);
    out.fields.push_back(dofs_to_nodes(op, x, 1));
    out.residual_norms.push_back(r.residual);
    out.iterations.push_back(r.iterations);
  }
  return out;
}

}  // namespace

CellSolutionSet solve_scalar_cell(const PeriodicCoefficient& P, const CellGrid& grid,
                                  const CellSolveOptions& options) {
  return solve_scalar_impl(&P, grid, options);
}

CellSolutionSet solve_scalar_cell_perforated(const CellGrid& grid, const CellSolveOptions& options) {
  return solve_scalar_impl(nullptr, grid, options);
}

CellSolutionSet solve_coupled_cell(const Matrix& ahat, const PeriodicCoefficient* P, const CellGrid& grid,
                                   double delta, const CellSolveOptions& options) {
  const int n = static_cast<int>(ahat.rows());
  if (ahat.cols() != n || n == 0) fail(ErrorKind::Input, "Ahat must be a nonempty square matrix");
  if (!ahat.allFinite()) fail(ErrorKind::Input, "Ahat has non-finite entries");
  if (!(delta > 0.0)) fail(ErrorKind::Parameter, "regularization delta must be positive");

  const CellOperator op(grid, P);
  const auto nd = static_cast<Eigen::Index>(op.dof_count());
  std::vector<Triplet> triplets;
  for (int m = 0; m < grid.dim(); ++m) {
    const SparseMatrix& K = op.stiffness(m);
    for (Eigen::Index row = 0; row < K.outerSize(); ++row) {
      for (SparseMatrix::InnerIterator it(K, row); it; ++it) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            if (ahat(i, j) != 0.0) triplets.emplace_back(i * nd + it.row(), j * nd + it.col(), ahat(i, j) * it.value());
          }
        }
      }
    }
  }
  SparseMatrix A(n * nd, n * nd);
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();

  const double scale = ahat.norm();
  const bool symmetric = (ahat - ahat.transpose()).norm() <= 1e-14 * scale;
  const bool use_cg = symmetric && Eigen::LLT<Matrix>(ahat).info() == Eigen::Success;
  const auto project = block_mean_projection(nd, n);

  CellSolutionSet out{CellSolutionSet::Kind::Coupled, grid, n, delta, {}, {}, {}, use_cg ? "cg" : "bicgstab"};
  for (int k = 0; k < grid.dim(); ++k) {
    for (int l = 0; l < n; ++l) {
      Vector b(n * nd);
      for (int i = 0; i < n; ++i) b.segment(i * nd, nd) = ahat(i, l) * op.load(k);
      const auto idx = static_cast<std::size_t>(k * n + l);
      Vector x = idx < options.initial_guesses.size() ? guess_to_dofs(op, options.initial_guesses[idx], n)
                                                      : Vector::Zero(n * nd);
      const auto r = use_cg ? projected_cg(A, b, x, project, options.krylov)
                            : projected_bicgstab(A, b, x, project, options.krylov);
      if (!r.converged) not_converged("coupled", r);
      remove_weighted_mean(x, op.mass(), n);
      out.fields.push_back(dofs_to_nodes(op, x, n));
      out.residual_norms.push_back(r.residual);
      out.iterations.push_back(r.iterations);
    }
  }
  return out;
}

namespace {

Vector lumped_node_mass(const CellGrid& grid) {
  Vector mass = Vector::Zero(static_cast<Eigen::Index>(grid.node_count()));
  const double share = grid.element_volume() / grid.nodes_per_element();
  for (std::size_t e = 0; e < grid.element_count(); ++e) {
    if (!grid.fluid(e)) continue;
    const auto nodes = grid.element_nodes(e);
    for (int a = 0; a < grid.nodes_per_element(); ++a) mass[static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(a)])] += share;
  }
  return mass;
}

}  // namespace

double cell_l2_norm(const CellGrid& grid, const Vector& field) {
  const Vector mass = lumped_node_mass(grid);
  const auto nn = mass.size();
  if (field.size() % nn != 0) fail(ErrorKind::Input, "field size is not a multiple of the node count");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < field.size() / nn; ++j) sum += mass.dot(field.segment(j * nn, nn).cwiseAbs2());
  return std::sqrt(sum);
}

double cell_mean(const CellGrid& grid, const Vector& field) {
  const Vector mass = lumped_node_mass(grid);
  return mass.dot(field) / mass.sum();
}

double element_gradient(const CellGrid& grid, const Eigen::Ref<const Vector>& w, std::size_t e, int m) {
  const auto nodes = grid.element_nodes(e);
  const auto at = [&](int a) { return w[static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(a)])]; };
  if (grid.dim() == 1) return (at(1) - at(0)) / grid.spacing(0);
  if (m == 0) return 0.5 * ((at(1) - at(0)) + (at(3) - at(2))) / grid.spacing(0);
  return 0.5 * ((at(2) - at(0)) + (at(3) - at(1))) / grid.spacing(1);
}

DeltaContinuation delta_continuation(const std::function<Matrix(double)>& ahat_of, const PeriodicCoefficient* P,
                                     const CellGrid& grid, const std::vector<double>& deltas,
                                     const CellSolveOptions& options) {
  if (deltas.empty()) fail(ErrorKind::Parameter, "delta sequence is empty");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) fail(ErrorKind::Parameter, "delta values must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) fail(ErrorKind::Parameter, "delta sequence must be strictly decreasing");
  }
  DeltaContinuation out;
  out.deltas = deltas;
  for (double delta : deltas) {
    try {
      out.solutions.emplace_back(solve_coupled_cell(ahat_of(delta), P, grid, delta, options));
      out.errors.emplace_back();
    } catch (const Error& e) {
      out.solutions.emplace_back(std::nullopt);
      out.errors.emplace_back(e.what());
    }
  }
  for (std::size_t i = 0; i + 1 < deltas.size(); ++i) {
    const auto& a = out.solutions[i];
    const auto& b = out.solutions[i + 1];
    if (!a || !b) {
      out.gaps.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double sum = 0.0;
    for (std::size_t f = 0; f < a->fields.size(); ++f) {
      const double g = cell_l2_norm(grid, a->fields[f] - b->fields[f]);
      sum += g * g;
    }
    out.gaps.push_back(std::sqrt(sum));
  }
  out.non_increasing = true;
  out.strictly_decreasing = true;
  for (std::size_t i = 0; i < out.gaps.size(); ++i) {
    if (std::isnan(out.gaps[i])) {
      out.non_increasing = out.strictly_decreasing = false;
      continue;
    }
    if (i > 0) {
      out.non_increasing = out.non_increasing && out.gaps[i] <= out.gaps[i - 1];
      out.strictly_decreasing = out.strictly_decreasing && out.gaps[i] < out.gaps[i - 1];
    }
  }
  return out;
}

}  // namespace xdhom
