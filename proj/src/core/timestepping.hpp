#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "core/effective.hpp"
#include "core/geometry.hpp"
#include "core/models.hpp"

namespace xdhom {

/// Cell-centered tensor grid on Omega = (0,L1) x ... x (0,Ld).
class MacroGrid {
 public:
  MacroGrid(int dim, std::array<double, 2> lengths, std::array<int, 2> cells);
  static MacroGrid line(double length, int cells) { return MacroGrid(1, {length, 1.0}, {cells, 1}); }

  int dim() const { return dim_; }
  double length(int axis) const { return lengths_[static_cast<std::size_t>(axis)]; }
  int cells(int axis) const { return cells_[static_cast<std::size_t>(axis)]; }
  std::size_t cell_count() const;
  double spacing(int axis) const { return length(axis) / cells(axis); }
  double cell_volume() const;
  std::array<double, 2> center(std::size_t c) const;
  std::size_t index(int i, int j = 0) const { return static_cast<std::size_t>(i + cells_[0] * j); }

  struct Face {
    std::size_t left;
    std::size_t right;
    int axis;
    double transmissibility;  // face area / spacing
  };
  /// Interior faces, axis 0 first, each in lexicographic order. Boundary
  /// faces carry no flux and are omitted.
  const std::vector<Face>& faces() const { return faces_; }
  /// Neighbours of a cell through interior faces.
  std::vector<std::size_t> neighbours(std::size_t c) const;

 private:
  int dim_;
  std::array<double, 2> lengths_;
  std::array<int, 2> cells_;
  std::vector<Face> faces_;
};

/// Species fractions per cell, stored as an n x cells matrix.
struct StateField {
  MacroGrid grid;
  Matrix u;
  double t = 0.0;
  Vector initial_mass;

  StateField(MacroGrid g, Matrix values, double time = 0.0);

  int species() const { return static_cast<int>(u.rows()); }
  Vector mass() const;
  /// Every cell in the closure of G, simplex sums within 1 + tol.
  bool in_closure(const DiffusionModel& model, double tol = 1e-12) const;
  bool interior(const DiffusionModel& model) const;
};

/// Entropy H(u) = sum over cells of h(u) times the cell volume.
double total_entropy(const DiffusionModel& model, const StateField& state);

/// Source of the n x n face factors K_f in the flux coeff * A(u_f) K_f (u_R - u_L).
class FluxModel {
 public:
  virtual ~FluxModel() = default;
  /// One factor per interior face, evaluated from the lagged state.
  virtual std::vector<Matrix> face_factors(const StateField& lagged) const = 0;
  virtual std::string describe() const = 0;
};

/// Oscillating coefficient P(x/eps): harmonic mean of the cell-center values
/// of the two cells sharing the face, times the identity.
std::unique_ptr<FluxModel> micro_flux(const MacroGrid& grid, int species, const CoefficientSpec& P,
                                      const CellGeometry& cell, double eps);

/// D_hom,mm on axis-m faces times the identity (nonlocal kind, or any
/// scalar homogenized coefficient).
std::unique_ptr<FluxModel> dhom_flux(const MacroGrid& grid, int species, const EffectiveTensor& dhom);

/// Local kind: per-cell factor K[j][l][m][m] from the cache at the lagged
/// state, averaged arithmetically across each face.
std::unique_ptr<FluxModel> cached_tensor_flux(const MacroGrid& grid, int species, std::shared_ptr<TensorCache> cache);

struct StepperOptions {
  double newton_tolerance = 1e-10;  // relative to |u_old| vol / dt
  int max_newton_iterations = 50;
  int max_backtracks = 30;
  int max_halvings = 5;
  /// Porosity factor on the time derivative (1 means none).
  double storage_factor = 1.0;
};

struct StepInfo {
  int newton_iterations = 0;
  double residual = 0.0;
  double production = 0.0;  // entropy production rate at the new state
  double dt = 0.0;
};

/// One implicit Euler step solved by damped Newton in w = h'(u).
/// Throws SolverError(Step) on stagnation or divergence.
StateField implicit_step(const DiffusionModel& model, const FluxModel& flux, const StateField& state, double dt,
                         const StepperOptions& options = {}, StepInfo* info = nullptr);

StateField step_macro(const DiffusionModel& model, const FluxModel& flux, const StateField& state, double dt,
                      const StepperOptions& options = {}, StepInfo* info = nullptr);

/// Checks that the grid resolves eps (at least 8 cells per period) before stepping.
StateField step_micro(const DiffusionModel& model, const FluxModel& flux, const StateField& state,
                      const CellGeometry& cell, double eps, double dt, const StepperOptions& options = {},
                      StepInfo* info = nullptr);

/// eps-periods must tile Omega with an integer number (at least 8) of cells each.
void require_micro_resolution(const MacroGrid& grid, const CellGeometry& cell, double eps);

/// Discrete entropy production sum over faces of (w_R - w_L) . F.
double entropy_production(const DiffusionModel& model, const StateField& state, const std::vector<Matrix>& factors);

struct TrajectoryLog {
  std::vector<double> t;
  std::vector<double> H;
  std::vector<double> production;
  std::vector<std::vector<double>> mass;  // one row per entry
  std::vector<int> newton_iterations;
  std::vector<double> dt;
  std::vector<bool> interior;

  std::size_t size() const { return t.size(); }
  /// Header t,H,production,mass_1..mass_n,newton_iters,dt.
  std::string to_csv() const;
  /// Largest relative per-species mass drift against the first entry.
  double max_relative_mass_drift() const;
  /// Largest H(m+1) - H(m).
  double max_entropy_increase() const;
  double min_production() const;
};

struct TransientResult {
  StateField final_state;
  TrajectoryLog log;
  std::string error;  // nonempty when the run stopped early
};

/// Fixed-dt loop. A failed step is retried as two half steps, recursively
/// up to max_halvings times, before the run stops with a partial log.
TransientResult run_transient(const DiffusionModel& model, const FluxModel& flux, const StateField& initial,
                              double dt, double t_end, const StepperOptions& options = {});

}  // namespace xdhom
