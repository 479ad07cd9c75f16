#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/geometry.hpp"
#include "core/krylov.hpp"
#include "core/models.hpp"

namespace xdhom {

/// Q1 finite-element discretization of the periodic cell operator
/// -div(P grad .) on the fluid part of a CellGrid. Degrees of freedom are the
/// active nodes; nodes touching only masked elements are pinned to zero.
class CellOperator {
 public:
  /// `coefficient` may be null, meaning P = 1 (perforated cell problems).
  CellOperator(const CellGrid& grid, const PeriodicCoefficient* coefficient);

  const CellGrid& grid() const { return *grid_; }
  std::size_t dof_count() const { return dof_to_node_.size(); }
  std::size_t node_of(std::size_t dof) const { return dof_to_node_[dof]; }

  /// Stiffness for direction m alone: int P_m d_m phi_a d_m phi_b.
  const SparseMatrix& stiffness(int m) const { return stiffness_[static_cast<std::size_t>(m)]; }
  /// Sum over directions.
  SparseMatrix laplacian() const;
  /// Load vector -int P_k d_k phi_a for the unit forcing in direction k.
  const Vector& load(int k) const { return load_[static_cast<std::size_t>(k)]; }
  /// Lumped mass per dof over fluid elements; sums to |Y1|.
  const Vector& mass() const { return mass_; }

  /// Expands dof values to all grid nodes (inactive nodes get 0).
  Vector to_nodes(const Vector& dofs) const;

 private:
  const CellGrid* grid_;
  std::vector<std::size_t> dof_to_node_;
  std::vector<long> node_to_dof_;
  std::vector<SparseMatrix> stiffness_;
  std::vector<Vector> load_;
  Vector mass_;
};

struct CellSolveOptions {
  KrylovOptions krylov{};
  /// Optional initial guesses, one per right-hand side in solve order, in
  /// node layout. Used to probe uniqueness.
  std::vector<Vector> initial_guesses;
};

/// Corrector fields on the cell grid. Scalar sets hold w^l for l = 1..d;
/// coupled sets hold W^{kl} for k = 1..d, l = 1..n, each with n components
/// stored species-major (component j occupies nodes [j*N, (j+1)*N)).
struct CellSolutionSet {
  enum class Kind { Scalar, Coupled };

  Kind kind = Kind::Scalar;
  CellGrid grid;
  int species = 1;
  double delta = 0.0;  // coupled only
  std::vector<Vector> fields;
  std::vector<double> residual_norms;
  std::vector<std::size_t> iterations;
  std::string solver;  // "cg" or "bicgstab"

  int dim() const { return grid.dim(); }
  std::size_t node_count() const { return grid.node_count(); }

  const Vector& scalar(int l) const { return fields[static_cast<std::size_t>(l)]; }
  const Vector& coupled(int k, int l) const {
    return fields[static_cast<std::size_t>(k * species + l)];
  }
  Eigen::VectorBlock<const Vector> component(int k, int l, int j) const {
    const auto nn = static_cast<Eigen::Index>(node_count());
    return coupled(k, l).segment(j * nn, nn);
  }
  double max_norm() const;
};

CellSolutionSet solve_scalar_cell(const PeriodicCoefficient& P, const CellGrid& grid,
                                  const CellSolveOptions& options = {});

/// Perforated variant: P = 1 on the fluid part, natural no-flux condition on
/// the hole boundary.
CellSolutionSet solve_scalar_cell_perforated(const CellGrid& grid, const CellSolveOptions& options = {});

/// Coupled cell problem div_y(P(y) Ahat (grad W^{kl} + e_k e_l)) = 0 where
/// e_k e_l has entries delta_{km} delta_{jl} (row m = space, column j =
/// species). `coefficient` null means P = 1.
CellSolutionSet solve_coupled_cell(const Matrix& ahat, const PeriodicCoefficient* P, const CellGrid& grid,
                                   double delta, const CellSolveOptions& options = {});

/// Weighted (lumped-mass) L2(Y1) norm of a node field, possibly multi-component.
double cell_l2_norm(const CellGrid& grid, const Vector& field);

/// Lumped-mass mean of one node field over Y1.
double cell_mean(const CellGrid& grid, const Vector& field);

/// Gradient of a Q1 node field at the center of element e along axis m.
double element_gradient(const CellGrid& grid, const Eigen::Ref<const Vector>& field, std::size_t e, int m);

struct DeltaContinuation {
  std::vector<double> deltas;
  std::vector<std::optional<CellSolutionSet>> solutions;
  std::vector<std::string> errors;  // empty string on success
  /// gaps[i] = ||W_{delta_i} - W_{delta_{i+1}}||_{L2(Y)}, summed over all
  /// (k, l, j); NaN when either neighbour failed.
  std::vector<double> gaps;
  bool non_increasing = false;
  bool strictly_decreasing = false;
};

/// Solves the regularized coupled cell problem along a strictly decreasing
/// delta sequence. `ahat_of(delta)` supplies the constant matrix.
DeltaContinuation delta_continuation(const std::function<Matrix(double)>& ahat_of, const PeriodicCoefficient* P,
                                     const CellGrid& grid, const std::vector<double>& deltas,
                                     const CellSolveOptions& options = {});

}  // namespace xdhom
