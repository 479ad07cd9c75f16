#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include <Eigen/Sparse>

#include "core/models.hpp"

namespace xdhom {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct KrylovOptions {
  double tolerance = 1e-10;  // relative to the projected right-hand side
  std::optional<std::size_t> max_iterations;  // default 50 sqrt(unknowns)
};

struct KrylovResult {
  std::size_t iterations = 0;
  double residual = 0.0;  // true relative residual at exit
  bool converged = false;
};

/// Removes the components of a vector along the operator's null space
/// (constants per species block). Applied in place.
using Projection = std::function<void(Vector&)>;

/// Preconditioned CG for symmetric positive semi-definite systems that are
/// consistent on the range of `project`.
KrylovResult projected_cg(const SparseMatrix& A, const Vector& b, Vector& x, const Projection& project,
                          const KrylovOptions& options);

/// Right-preconditioned BiCGSTAB for nonsymmetric systems, same projection
/// contract as projected_cg.
KrylovResult projected_bicgstab(const SparseMatrix& A, const Vector& b, Vector& x, const Projection& project,
                                const KrylovOptions& options);

std::size_t default_iteration_cap(std::size_t unknowns);

}  // namespace xdhom
