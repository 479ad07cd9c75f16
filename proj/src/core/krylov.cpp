#include "core/krylov.hpp"

#include <cmath>

namespace xdhom {

std::size_t default_iteration_cap(std::size_t unknowns) {
  return static_cast<std::size_t>(std::ceil(50.0 * std::sqrt(static_cast<double>(unknowns))));
}

namespace {

Vector inverse_diagonal(const SparseMatrix& A) {
  Vector d = A.diagonal();
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = d[i] != 0.0 ? 1.0 / d[i] : 1.0;
  return d;
}

double true_residual(const SparseMatrix& A, const Vector& b, const Vector& x, const Projection& project,
                     double bnorm) {
  Vector r = b - A * x;
  project(r);
  return r.norm() / bnorm;
}

}  // namespace

KrylovResult projected_cg(const SparseMatrix& A, const Vector& b_in, Vector& x, const Projection& project,
                          const KrylovOptions& options) {
  KrylovResult result;
  Vector b = b_in;
  project(b);
  const double bnorm = b.norm();
  if (x.size() != b.size()) x = Vector::Zero(b.size());
  if (bnorm == 0.0) {
    x.setZero();
    result.converged = true;
    return result;
  }
  const std::size_t cap = options.max_iterations.value_or(default_iteration_cap(static_cast<std::size_t>(b.size())));
  const Vector dinv = inverse_diagonal(A);

  // Restart from the true residual when the recursive one has drifted.
  while (result.iterations < cap) {
    Vector r = b - A * x;
    project(r);
    if (r.norm() <= options.tolerance * bnorm) break;
    const std::size_t before = result.iterations;
    Vector z = dinv.cwiseProduct(r);
    project(z);
    Vector p = z;
    double rz = r.dot(z);
    while (result.iterations < cap) {
      const Vector Ap = A * p;
      const double pAp = p.dot(Ap);
      if (!(pAp > 0.0)) break;
      const double alpha = rz / pAp;
      x += alpha * p;
      r -= alpha * Ap;
      project(r);
      ++result.iterations;
      if (r.norm() <= 0.5 * options.tolerance * bnorm) break;
      z = dinv.cwiseProduct(r);
      project(z);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    if (result.iterations == before) break;
    if (true_residual(A, b, x, project, bnorm) <= options.tolerance) break;
  }
  result.residual = true_residual(A, b, x, project, bnorm);
  result.converged = result.residual <= options.tolerance;
  return result;
}

KrylovResult projected_bicgstab(const SparseMatrix& A, const Vector& b_in, Vector& x, const Projection& project,
                                const KrylovOptions& options) {
  KrylovResult result;
  Vector b = b_in;
  project(b);
  const double bnorm = b.norm();
  if (x.size() != b.size()) x = Vector::Zero(b.size());
  if (bnorm == 0.0) {
    x.setZero();
    result.converged = true;
    return result;
  }
  const std::size_t cap = options.max_iterations.value_or(default_iteration_cap(static_cast<std::size_t>(b.size())));
  const Vector dinv = inverse_diagonal(A);
  const auto n = b.size();

  while (result.iterations < cap) {
    Vector r = b - A * x;
    project(r);
    if (r.norm() <= options.tolerance * bnorm) break;
    const std::size_t before = result.iterations;
    const Vector r_hat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    Vector v = Vector::Zero(n), p = Vector::Zero(n);
    while (result.iterations < cap) {
      const double rho_next = r_hat.dot(r);
      if (rho_next == 0.0 || omega == 0.0) break;
      const double beta = (rho_next / rho) * (alpha / omega);
      rho = rho_next;
      p = r + beta * (p - omega * v);
      Vector y = dinv.cwiseProduct(p);
      project(y);
      v = A * y;
      project(v);
      const double rv = r_hat.dot(v);
      if (rv == 0.0) break;
      alpha = rho / rv;
      Vector s = r - alpha * v;
      ++result.iterations;
      if (s.norm() <= 0.5 * options.tolerance * bnorm) {
        x += alpha * y;
        break;
      }
      Vector z = dinv.cwiseProduct(s);
      project(z);
      Vector t = A * z;
      project(t);
      const double tt = t.squaredNorm();
      omega = tt > 0.0 ? t.dot(s) / tt : 0.0;
      x += alpha * y + omega * z;
      r = s - omega * t;
      if (r.norm() <= 0.5 * options.tolerance * bnorm) break;
    }
    if (result.iterations == before) break;
    if (true_residual(A, b, x, project, bnorm) <= options.tolerance) break;
  }
  result.residual = true_residual(A, b, x, project, bnorm);
  result.converged = result.residual <= options.tolerance;
  return result;
}

}  // namespace xdhom
