#include "core/timestepping.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

MacroGrid::MacroGrid(int dim, std::array<double, 2> lengths, std::array<int, 2> cells)
    : dim_(dim), lengths_(lengths), cells_(cells) {
  if (dim != 1 && dim != 2) fail(ErrorKind::Configuration, fmt::format("domain dimension must be 1 or 2, got {}", dim));
  if (dim == 1) {
    lengths_[1] = 1.0;
    cells_[1] = 1;
  }
  for (int m = 0; m < dim; ++m) {
    if (!(lengths_[static_cast<std::size_t>(m)] > 0.0) || !std::isfinite(lengths_[static_cast<std::size_t>(m)]))
      fail(ErrorKind::Configuration, "domain lengths must be positive");
    if (cells_[static_cast<std::size_t>(m)] < 1) fail(ErrorKind::Configuration, "domain needs at least one cell per axis");
  }
  const double dx = spacing(0);
  const double dy = dim == 2 ? spacing(1) : 1.0;
  for (int j = 0; j < cells_[1]; ++j)
    for (int i = 0; i + 1 < cells_[0]; ++i) faces_.push_back({index(i, j), index(i + 1, j), 0, dy / dx});
  if (dim == 2) {
    for (int j = 0; j + 1 < cells_[1]; ++j)
      for (int i = 0; i < cells_[0]; ++i) faces_.push_back({index(i, j), index(i, j + 1), 1, dx / dy});
  }
}

std::size_t MacroGrid::cell_count() const {
  return static_cast<std::size_t>(cells_[0]) * static_cast<std::size_t>(cells_[1]);
}

double MacroGrid::cell_volume() const { return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1); }

std::array<double, 2> MacroGrid::center(std::size_t c) const {
  const int i = static_cast<int>(c % static_cast<std::size_t>(cells_[0]));
  const int j = static_cast<int>(c / static_cast<std::size_t>(cells_[0]));
  return {(i + 0.5) * spacing(0), dim_ == 2 ? (j + 0.5) * spacing(1) : 0.0};
}

std::vector<std::size_t> MacroGrid::neighbours(std::size_t c) const {
  const int i = static_cast<int>(c % static_cast<std::size_t>(cells_[0]));
  const int j = static_cast<int>(c / static_cast<std::size_t>(cells_[0]));
  std::vector<std::size_t> out;
  if (i > 0) out.push_back(index(i - 1, j));
  if (i + 1 < cells_[0]) out.push_back(index(i + 1, j));
  if (j > 0) out.push_back(index(i, j - 1));
  if (j + 1 < cells_[1]) out.push_back(index(i, j + 1));
  return out;
}

StateField::StateField(MacroGrid g, Matrix values, double time) : grid(std::move(g)), u(std::move(values)), t(time) {
  if (static_cast<std::size_t>(u.cols()) != grid.cell_count())
    fail(ErrorKind::Input, fmt::format("state has {} cells, grid has {}", u.cols(), grid.cell_count()));
  if (!u.allFinite()) fail(ErrorKind::Input, "state has non-finite values");
  initial_mass = mass();
}

Vector StateField::mass() const {
  Vector m = Vector::Zero(u.rows());
  for (Eigen::Index c = 0; c < u.cols(); ++c) m += u.col(c);
  return m * grid.cell_volume();
}

bool StateField::in_closure(const DiffusionModel& model, double tol) const {
  for (Eigen::Index c = 0; c < u.cols(); ++c)
    if (!model.entropy.contains_closure(u.col(c), tol)) return false;
  return true;
}

bool StateField::interior(const DiffusionModel& model) const {
  for (Eigen::Index c = 0; c < u.cols(); ++c)
    if (!model.entropy.contains(u.col(c))) return false;
  return true;
}

double total_entropy(const DiffusionModel& model, const StateField& state) {
  double H = 0.0;
  for (Eigen::Index c = 0; c < state.u.cols(); ++c) H += model.entropy.value(state.u.col(c));
  return H * state.grid.cell_volume();
}

namespace {

class FixedFlux final : public FluxModel {
 public:
  FixedFlux(std::vector<Matrix> factors, std::string label) : factors_(std::move(factors)), label_(std::move(label)) {}
  std::vector<Matrix> face_factors(const StateField&) const override { return factors_; }
  std::string describe() const override { return label_; }

 private:
  std::vector<Matrix> factors_;
  std::string label_;
};

class CachedFlux final : public FluxModel {
 public:
  CachedFlux(const MacroGrid& grid, int species, std::shared_ptr<TensorCache> cache)
      : grid_(grid), n_(species), cache_(std::move(cache)) {}

  std::vector<Matrix> face_factors(const StateField& lagged) const override {
    const std::size_t C = grid_.cell_count();
    std::vector<std::array<Matrix, 2>> per_cell(C);
    for (std::size_t c = 0; c < C; ++c) {
      const auto tensor = cache_->lookup(lagged.u.col(static_cast<Eigen::Index>(c)));
      if (tensor->species != n_ || tensor->dim != grid_.dim())
        fail(ErrorKind::Input, "cached tensor does not match the macroscopic problem");
      for (int m = 0; m < grid_.dim(); ++m) {
        Matrix K(n_, n_);
        for (int j = 0; j < n_; ++j)
          for (int l = 0; l < n_; ++l) K(j, l) = tensor->K(j, l, m, m);
        per_cell[c][static_cast<std::size_t>(m)] = std::move(K);
      }
    }
    std::vector<Matrix> out;
    out.reserve(grid_.faces().size());
    for (const auto& f : grid_.faces()) {
      const auto m = static_cast<std::size_t>(f.axis);
      out.emplace_back(0.5 * (per_cell[f.left][m] + per_cell[f.right][m]));
    }
    return out;
  }
  std::string describe() const override { return "lagged cached effective tensor"; }

 private:
  MacroGrid grid_;
  int n_;
  std::shared_ptr<TensorCache> cache_;
};

double fractional_part_error(double x) { return std::abs(x - std::round(x)); }

Vector safe_gradient(const DiffusionModel& model, const Vector& u) {
  if (model.entropy.contains(u)) return model.entropy.gradient(u);
  const double delta = 1e-10;
  const Vector clamped = (u.array() + delta / (model.n + 1)) / (1.0 + delta);
  return model.entropy.gradient(clamped);
}

}  // namespace

void require_micro_resolution(const MacroGrid& grid, const CellGeometry& cell, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorKind::Configuration, "eps must be positive");
  if (cell.dim() != grid.dim())
    fail(ErrorKind::Configuration, "cell and domain dimensions differ");
  for (int m = 0; m < grid.dim(); ++m) {
    const double periods = grid.length(m) / (eps * cell.length(m));
    if (fractional_part_error(periods) > 1e-9 * std::max(1.0, periods))
      fail(ErrorKind::Configuration,
           fmt::format("eps = {} does not tile the domain along axis {} ({} periods)", eps, m + 1, periods));
    const double per_period = grid.cells(m) / std::round(periods);
    if (fractional_part_error(per_period) > 1e-9 * per_period || per_period < 8.0 - 1e-9)
      fail(ErrorKind::Configuration,
           fmt::format("micro grid has {} cells per eps-period along axis {}; need an integer of at least 8",
                       per_period, m + 1));
  }
}

std::unique_ptr<FluxModel> micro_flux(const MacroGrid& grid, int species, const CoefficientSpec& P,
                                      const CellGeometry& cell, double eps) {
  require_micro_resolution(grid, cell, eps);
  const int d = grid.dim();
  const std::size_t C = grid.cell_count();
  std::vector<std::vector<double>> samples(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto x = grid.center(c);
    std::array<double, 2> y{0.0, 0.0};
    for (int m = 0; m < d; ++m) {
      const double b = cell.length(m);
      double ym = std::fmod(x[static_cast<std::size_t>(m)] / eps, b);
      if (ym < 0.0) ym += b;
      y[static_cast<std::size_t>(m)] = ym;
    }
    samples[c] = evaluate_coefficient(P, std::span<const double>(y.data(), static_cast<std::size_t>(d)), d);
    for (double v : samples[c])
      if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::Coefficient, "coefficient must be positive and finite");
  }
  std::vector<Matrix> factors;
  factors.reserve(grid.faces().size());
  for (const auto& f : grid.faces()) {
    const auto m = static_cast<std::size_t>(f.axis);
    const double a = samples[f.left][m];
    const double b = samples[f.right][m];
    factors.emplace_back(Matrix::Identity(species, species) * (2.0 * a * b / (a + b)));
  }
  return std::make_unique<FixedFlux>(std::move(factors), fmt::format("micro P(x/eps), eps = {}, {}", eps, describe(P)));
}

std::unique_ptr<FluxModel> dhom_flux(const MacroGrid& grid, int species, const EffectiveTensor& dh) {
  if (dh.kind != EffectiveTensor::Kind::TwoIndex || dh.dim != grid.dim())
    fail(ErrorKind::Input, "D_hom must be a two-index tensor of the domain dimension");
  std::vector<Matrix> factors;
  factors.reserve(grid.faces().size());
  for (const auto& f : grid.faces()) factors.emplace_back(Matrix::Identity(species, species) * dh(f.axis, f.axis));
  return std::make_unique<FixedFlux>(std::move(factors), "homogenized D_hom A(u)");
}

std::unique_ptr<FluxModel> cached_tensor_flux(const MacroGrid& grid, int species, std::shared_ptr<TensorCache> cache) {
  if (!cache) fail(ErrorKind::Input, "tensor cache is null");
  return std::make_unique<CachedFlux>(grid, species, std::move(cache));
}

double entropy_production(const DiffusionModel& model, const StateField& state, const std::vector<Matrix>& factors) {
  const auto& faces = state.grid.faces();
  if (factors.size() != faces.size()) fail(ErrorKind::Input, "one face factor per interior face is required");
  std::vector<Vector> w(static_cast<std::size_t>(state.u.cols()));
  for (Eigen::Index c = 0; c < state.u.cols(); ++c) w[static_cast<std::size_t>(c)] = safe_gradient(model, state.u.col(c));
  double sum = 0.0;
  for (std::size_t k = 0; k < faces.size(); ++k) {
    const auto& f = faces[k];
    const Vector uL = state.u.col(static_cast<Eigen::Index>(f.left));
    const Vector uR = state.u.col(static_cast<Eigen::Index>(f.right));
    const Vector F = f.transmissibility * (model.A(0.5 * (uL + uR)) * (factors[k] * (uR - uL)));
    sum += (w[f.right] - w[f.left]).dot(F);
  }
  return sum;
}

namespace {

struct NewtonSystem {
  const DiffusionModel& model;
  const MacroGrid& grid;
  const std::vector<Matrix>& factors;
  const Matrix& u_old;
  double dt;
  double storage;
  int n;
  std::size_t C;

  Matrix states(const Vector& w) const {
    Matrix u(n, static_cast<Eigen::Index>(C));
    for (std::size_t c = 0; c < C; ++c)
      u.col(static_cast<Eigen::Index>(c)) = model.entropy.gradient_inverse(w.segment(static_cast<Eigen::Index>(c) * n, n));
    return u;
  }

  Vector residual(const Matrix& u) const {
    const double vol = grid.cell_volume();
    Vector R(static_cast<Eigen::Index>(C) * n);
    for (std::size_t c = 0; c < C; ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      auto r = R.segment(col * n, n);
      r = storage * vol / dt * (u.col(col) - u_old.col(col));
      if (model.has_reaction()) r -= vol * model.f(u.col(col));
    }
    const auto& faces = grid.faces();
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      const auto L = static_cast<Eigen::Index>(f.left);
      const auto Rt = static_cast<Eigen::Index>(f.right);
      const Vector diff = u.col(Rt) - u.col(L);
      const Vector F = f.transmissibility * (model.A(0.5 * (u.col(L) + u.col(Rt))) * (factors[k] * diff));
      R.segment(L * n, n) -= F;
      R.segment(Rt * n, n) += F;
    }
    return R;
  }
};

int color_count(const MacroGrid& grid) { return grid.dim() == 1 ? 3 : 5; }

int color_of(const MacroGrid& grid, std::size_t c) {
  const int i = static_cast<int>(c % static_cast<std::size_t>(grid.cells(0)));
  const int j = static_cast<int>(c / static_cast<std::size_t>(grid.cells(0)));
  return grid.dim() == 1 ? i % 3 : (i + 2 * j) % 5;
}

Eigen::SparseMatrix<double> fd_jacobian(const NewtonSystem& sys, const Vector& w, const Vector& R,
                                        const std::vector<std::vector<std::size_t>>& stencil) {
  const int n = sys.n;
  const std::size_t C = sys.C;
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> step(C, 0.0);
  for (int color = 0; color < color_count(sys.grid); ++color) {
    for (int j = 0; j < n; ++j) {
      Vector wp = w;
      bool any = false;
      for (std::size_t c = 0; c < C; ++c) {
        if (color_of(sys.grid, c) != color) continue;
        const auto idx = static_cast<Eigen::Index>(c) * n + j;
        step[c] = 1e-7 * std::max(1.0, std::abs(w[idx]));
        wp[idx] += step[c];
        any = true;
      }
      if (!any) continue;
      const Vector Rp = sys.residual(sys.states(wp));
      for (std::size_t r = 0; r < C; ++r) {
        for (std::size_t c : stencil[r]) {
          if (color_of(sys.grid, c) != color) continue;
          for (int i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(r) * n + i;
            const double v = (Rp[row] - R[row]) / step[c];
            if (v != 0.0) triplets.emplace_back(row, static_cast<Eigen::Index>(c) * n + j, v);
          }
        }
      }
    }
  }
  const auto N = static_cast<Eigen::Index>(C) * n;
  Eigen::SparseMatrix<double> J(N, N);
  J.setFromTriplets(triplets.begin(), triplets.end());
  J.makeCompressed();
  return J;
}

[[noreturn]] void step_failure(const std::string& what, double residual) {
  throw SolverError(ErrorKind::Step, what + "; reduce dt", residual);
}

bool newton_update(const NewtonSystem& sys, const std::vector<std::vector<std::size_t>>& stencil, Vector& dw,
                   const Vector& w, const Vector& R) {
  const auto J = fd_jacobian(sys, w, R, stencil);
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(J);
  if (lu.info() != Eigen::Success) return false;
  dw = lu.solve(-R);
  return lu.info() == Eigen::Success && dw.allFinite();
}

}  // namespace

StateField implicit_step(const DiffusionModel& model, const FluxModel& flux, const StateField& state, double dt,
                         const StepperOptions& options, StepInfo* info) {
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::Parameter, "dt must be positive");
  if (state.species() != model.n) fail(ErrorKind::Input, "state and model species counts differ");
  const MacroGrid& grid = state.grid;
  const auto factors = flux.face_factors(state);
  if (factors.size() != grid.faces().size()) fail(ErrorKind::Internal, "flux model returned the wrong face count");
  const int n = model.n;
  const std::size_t C = grid.cell_count();
  const NewtonSystem sys{model, grid, factors, state.u, dt, options.storage_factor, n, C};

  std::vector<std::vector<std::size_t>> stencil(C);
  for (std::size_t c = 0; c < C; ++c) {
    stencil[c] = grid.neighbours(c);
    stencil[c].push_back(c);
  }

  Vector w(static_cast<Eigen::Index>(C) * n);
  for (std::size_t c = 0; c < C; ++c)
    w.segment(static_cast<Eigen::Index>(c) * n, n) = safe_gradient(model, state.u.col(static_cast<Eigen::Index>(c)));

  const double scale =
      options.storage_factor * grid.cell_volume() / dt * std::max(state.u.norm(), 1e-8 * std::sqrt(double(C * n)));
  Matrix u = sys.states(w);
  Vector R = sys.residual(u);
  double rn = R.norm();
  int iterations = 0;
  while (rn > options.newton_tolerance * scale) {
    if (iterations >= options.max_newton_iterations)
      step_failure(fmt::format("Newton did not converge in {} iterations (relative residual {:.3e})", iterations,
                               rn / scale),
                   rn / scale);
    Vector dw;
    if (!newton_update(sys, stencil, dw, w, R)) step_failure("Newton linear solve failed", rn / scale);
    double lambda = 1.0;
    bool accepted = false;
    for (int b = 0; b <= options.max_backtracks; ++b) {
      const Vector wt = w + lambda * dw;
      Matrix ut = sys.states(wt);
      Vector Rt = sys.residual(ut);
      const double rt = Rt.norm();
      if (std::isfinite(rt) && rt < (1.0 - 1e-4 * lambda) * rn) {
        w = wt;
        u = std::move(ut);
        R = std::move(Rt);
        rn = rt;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted)
      step_failure(fmt::format("Newton stagnated after {} backtracks (relative residual {:.3e})", options.max_backtracks,
                               rn / scale),
                   rn / scale);
    ++iterations;
  }
  // One more full step after convergence drives the conservation defect
  // down to round-off.
  if (rn > 0.0) {
    Vector dw;
    if (newton_update(sys, stencil, dw, w, R)) {
      const Vector wt = w + dw;
      Matrix ut = sys.states(wt);
      Vector Rt = sys.residual(ut);
      if (Rt.norm() < rn) {
        u = std::move(ut);
        rn = Rt.norm();
        ++iterations;
      }
    }
  }

  StateField next(grid, u, state.t + dt);
  next.initial_mass = state.initial_mass;
  if (info) {
    info->newton_iterations = iterations;
    info->residual = rn / scale;
    info->dt = dt;
    info->production = entropy_production(model, next, factors);
  }
  return next;
}

StateField step_macro(const DiffusionModel& model, const FluxModel& flux, const StateField& state, double dt,
                      const StepperOptions& options, StepInfo* info) {
  return implicit_step(model, flux, state, dt, options, info);
}

StateField step_micro(const DiffusionModel& model, const FluxModel& flux, const StateField& state,
                      const CellGeometry& cell, double eps, double dt, const StepperOptions& options, StepInfo* info) {
  require_micro_resolution(state.grid, cell, eps);
  return implicit_step(model, flux, state, dt, options, info);
}

std::string TrajectoryLog::to_csv() const {
  const std::size_t n = mass.empty() ? 0 : mass.front().size();
  std::string out = "t,H,production";
  for (std::size_t i = 0; i < n; ++i) out += fmt::format(",mass_{}", i + 1);
  out += ",newton_iters,dt\n";
  for (std::size_t k = 0; k < size(); ++k) {
    out += fmt::format("{:.17g},{:.17g},{:.17g}", t[k], H[k], production[k]);
    for (double m : mass[k]) out += fmt::format(",{:.17g}", m);
    out += fmt::format(",{},{:.17g}\n", newton_iterations[k], dt[k]);
  }
  return out;
}

double TrajectoryLog::max_relative_mass_drift() const {
  double drift = 0.0;
  if (mass.empty()) return drift;
  for (const auto& row : mass)
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double ref = std::abs(mass.front()[i]);
      const double diff = std::abs(row[i] - mass.front()[i]);
      drift = std::max(drift, ref > 0.0 ? diff / ref : diff);
    }
  return drift;
}

double TrajectoryLog::max_entropy_increase() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < H.size(); ++k) worst = std::max(worst, H[k] - H[k - 1]);
  return worst;
}

double TrajectoryLog::min_production() const {
  double lo = std::numeric_limits<double>::infinity();
  for (double p : production) lo = std::min(lo, p);
  return lo;
}

namespace {

void record(TrajectoryLog& log, const DiffusionModel& model, const StateField& s, double production, int iterations,
            double dt) {
  log.t.push_back(s.t);
  log.H.push_back(total_entropy(model, s));
  log.production.push_back(production);
  const Vector m = s.mass();
  log.mass.emplace_back(m.data(), m.data() + m.size());
  log.newton_iterations.push_back(iterations);
  log.dt.push_back(dt);
  log.interior.push_back(s.interior(model));
}

void advance(const DiffusionModel& model, const FluxModel& flux, StateField& state, double dt, int depth,
             const StepperOptions& options, TrajectoryLog& log) {
  StepInfo info;
  try {
    state = implicit_step(model, flux, state, dt, options, &info);
  } catch (const SolverError& e) {
    if (depth >= options.max_halvings) throw;
    advance(model, flux, state, 0.5 * dt, depth + 1, options, log);
    advance(model, flux, state, 0.5 * dt, depth + 1, options, log);
    return;
  }
  record(log, model, state, info.production, info.newton_iterations, info.dt);
}

}  // namespace

TransientResult run_transient(const DiffusionModel& model, const FluxModel& flux, const StateField& initial,
                              double dt, double t_end, const StepperOptions& options) {
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) fail(ErrorKind::Parameter, "t_end must be nonnegative");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::Parameter, "dt must be positive");
  if (!initial.in_closure(model)) fail(ErrorKind::Input, "initial state lies outside the admissible region");
  TransientResult result{initial, {}, {}};
  record(result.log, model, initial, entropy_production(model, initial, flux.face_factors(initial)), 0, 0.0);
  const double t0 = initial.t;
  const double slack = 1e-12 * std::max(1.0, t_end);
  std::size_t step = 0;
  try {
    while (t_end - (result.final_state.t - t0) > slack) {
      const double target = std::min(t0 + static_cast<double>(step + 1) * dt, t0 + t_end);
      advance(model, flux, result.final_state, target - result.final_state.t, 0, options, result.log);
      result.final_state.t = target;
      result.log.t.back() = target;
      ++step;
    }
  } catch (const SolverError& e) {
    result.error = fmt::format("t = {:.6g}: {}", result.final_state.t, e.what());
  }
  return result;
}

}  // namespace xdhom
