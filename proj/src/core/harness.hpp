#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/effective.hpp"
#include "core/geometry.hpp"
#include "core/models.hpp"
#include "core/timestepping.hpp"

namespace xdhom {

struct ModelConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct CellConfig {
  int dim = 1;
  std::vector<double> lengths;
  int resolution = 64;
  std::optional<HoleSpec> hole;
  std::optional<CoefficientSpec> coefficient;  // absent means P = 1
  double delta = kDefaultDelta;
  double tolerance = 1e-10;
};

struct DomainConfig {
  int dim = 1;
  std::array<double, 2> lengths{1.0, 1.0};
  std::array<int, 2> cells{64, 1};
};

struct InitialConfig {
  std::string type;
  std::function<Vector(const std::array<double, 2>&)> profile;
};

struct TimeConfig {
  std::optional<double> dt;  // default 1e-3 L^2
  double t_end = 0.0;
};

struct SweepConfig {
  std::vector<double> eps;
  int macro_cells = 128;
};

/// Parsed configuration document. Sections are optional at parse time and
/// required by the commands that use them.
struct RunConfig {
  std::optional<ModelConfig> model;
  std::optional<CellConfig> cell;
  std::optional<DomainConfig> domain;
  std::optional<InitialConfig> initial;
  std::optional<TimeConfig> time;
  double quantization = 1e-2;
  int cells_per_period = 16;
  std::optional<SweepConfig> sweep;
  bool porosity_scaling = false;
  std::uint64_t seed = 0;
};

/// Unknown keys anywhere in the document raise a configuration error.
RunConfig parse_config(const nlohmann::json& document);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

DiffusionModel config_model(const RunConfig& config);
CellGrid config_cell_grid(const RunConfig& config);
/// Samples the coefficient, or returns nullopt when P = 1.
std::optional<PeriodicCoefficient> config_coefficient(const RunConfig& config, const CellGrid& grid);
MacroGrid config_domain(const RunConfig& config, std::optional<int> cells_override = std::nullopt);
/// Cell averages of the initial profile by 4-point Gauss quadrature per axis.
StateField config_initial_state(const RunConfig& config, const DiffusionModel& model, const MacroGrid& grid);
double config_dt(const RunConfig& config);

struct CellReport {
  CellSolutionSet cells;
  EffectiveTensor dhom;
};
CellReport run_cell_problem(const RunConfig& config);

/// Tensor at the state given as {"u": [...]}.
EffectiveTensor run_effective(const RunConfig& config, const nlohmann::json& state);

struct MacroRun {
  TransientResult result;
  CacheStatistics cache;
  std::string flux;
};
MacroRun run_macro(const RunConfig& config, std::optional<int> cells_override = std::nullopt);
TransientResult run_micro(const RunConfig& config, double eps);

struct SweepRow {
  double eps = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  std::size_t micro_cells = 0;
  std::string failure;  // empty on success
};

struct ConvergenceReport {
  std::string model_id;
  std::vector<SweepRow> rows;
  std::optional<double> rate;
  std::optional<double> rate_residual;
  std::optional<double> intercept;
  bool monotone = false;
  int macro_cells = 0;
  int cells_per_period = 0;
  double dt = 0.0;
  double t_end = 0.0;
  double reference_gap = 0.0;  // macro N vs 2N
  bool reference_converged = false;
  CacheStatistics cache;
};

ConvergenceReport eps_sweep(const RunConfig& config);

/// Per-species norms over Omega, summed over species for L1 and L2.
struct ErrorNorms {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};
ErrorNorms field_difference(const StateField& a, const StateField& b);
/// Conservative average of a fine state onto a coarser grid whose cells
/// contain an integer number of fine cells per axis.
StateField average_onto(const StateField& fine, const MacroGrid& coarse);

/// Least squares slope of log y against log x, with the RMS residual.
struct LogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};
LogFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y);

std::string sweep_csv(const ConvergenceReport& report);
/// Log-log plot of the L2 errors with the fitted line. Empty string when
/// there are no successful rows.
std::string sweep_svg(const ConvergenceReport& report);
nlohmann::json to_json(const ConvergenceReport& report);
std::string state_csv(const StateField& state);
std::string correctors_csv(const CellSolutionSet& cells);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Command drivers writing their outputs into `out`.
void emit_cell(const RunConfig& config, const std::filesystem::path& out);
void emit_effective(const RunConfig& config, const nlohmann::json& state, const std::filesystem::path& out);
void emit_macro(const RunConfig& config, const std::filesystem::path& out);
void emit_micro(const RunConfig& config, double eps, const std::filesystem::path& out);
/// Returns false when some eps row failed (outputs are still written).
bool emit_sweep(const RunConfig& config, const std::filesystem::path& out);

}  // namespace xdhom
