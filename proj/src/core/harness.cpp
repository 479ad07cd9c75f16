#include "core/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  fail(ErrorKind::Configuration, fmt::format("config {}: {}", where, what));
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error(where, "must be an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) config_error(where, fmt::format("unknown key '{}'", item.key()));
  }
}

const json& required(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) config_error(where, fmt::format("missing key '{}'", key));
  return j.at(key);
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) config_error(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) config_error(where, "expected a finite number");
  return x;
}

int as_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) config_error(where, "expected an integer");
  return v.get<int>();
}

std::vector<double> as_numbers(const json& v, const std::string& where) {
  if (!v.is_array()) config_error(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], fmt::format("{}[{}]", where, i)));
  return out;
}

std::vector<int> as_integers(const json& v, const std::string& where) {
  if (!v.is_array()) config_error(where, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_integer(v[i], fmt::format("{}[{}]", where, i)));
  return out;
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) config_error(where, "expected a string");
  return v.get<std::string>();
}

double number_at(const json& j, const std::string& where, const char* key) {
  return as_number(required(j, where, key), where + "." + key);
}

std::vector<double> numbers_at(const json& j, const std::string& where, const char* key) {
  return as_numbers(required(j, where, key), where + "." + key);
}

std::array<double, 2> pair_of(const std::vector<double>& v, const std::string& where, int dim) {
  if (v.size() != static_cast<std::size_t>(dim)) config_error(where, fmt::format("expected {} entries", dim));
  return {v[0], dim == 2 ? v[1] : 0.0};
}

HoleSpec parse_hole(const json& j) {
  const std::string where = "cell.hole";
  check_keys(j, where, {"shape", "center", "size", "radius"});
  HoleSpec h;
  const auto shape = as_string(required(j, where, "shape"), where + ".shape");
  h.center = pair_of(numbers_at(j, where, "center"), where + ".center", 2);
  if (shape == "box") {
    if (j.contains("radius")) config_error(where, "a box hole takes 'size', not 'radius'");
    h.shape = HoleShape::Box;
    h.size = pair_of(numbers_at(j, where, "size"), where + ".size", 2);
  } else if (shape == "ball") {
    if (j.contains("size")) config_error(where, "a ball hole takes 'radius', not 'size'");
    h.shape = HoleShape::Ball;
    h.size = {number_at(j, where, "radius"), 0.0};
  } else {
    config_error(where + ".shape", fmt::format("unknown shape '{}' (box or ball)", shape));
  }
  return h;
}

CoefficientSpec parse_coefficient(const json& j, const std::vector<double>& lengths) {
  const std::string where = "cell.coefficient";
  if (!j.is_object()) config_error(where, "must be an object");
  const auto type = as_string(required(j, where, "type"), where + ".type");
  if (type == "constant") {
    check_keys(j, where, {"type", "values"});
    return ConstantCoefficient{numbers_at(j, where, "values")};
  }
  if (type == "layers") {
    check_keys(j, where, {"type", "axis", "breaks", "values"});
    LayeredCoefficient c;
    c.axis = as_integer(required(j, where, "axis"), where + ".axis");
    c.breaks = numbers_at(j, where, "breaks");
    const auto& values = required(j, where, "values");
    if (!values.is_array()) config_error(where + ".values", "expected an array of arrays");
    for (std::size_t i = 0; i < values.size(); ++i)
      c.values.push_back(as_numbers(values[i], fmt::format("{}.values[{}]", where, i)));
    return c;
  }
  if (type == "inclusion") {
    check_keys(j, where, {"type", "lo", "hi", "inside", "outside"});
    return InclusionCoefficient{numbers_at(j, where, "lo"), numbers_at(j, where, "hi"), numbers_at(j, where, "inside"),
                                numbers_at(j, where, "outside")};
  }
  if (type == "sinusoid") {
    check_keys(j, where, {"type", "mean", "amplitude", "axis"});
    return sinusoid_coefficient(numbers_at(j, where, "mean"), numbers_at(j, where, "amplitude"),
                                as_integers(required(j, where, "axis"), where + ".axis"), lengths);
  }
  config_error(where + ".type", fmt::format("unknown coefficient type '{}'", type));
}

CellConfig parse_cell(const json& j) {
  const std::string where = "cell";
  check_keys(j, where, {"dim", "lengths", "resolution", "hole", "coefficient", "delta", "tolerance"});
  CellConfig c;
  c.dim = as_integer(required(j, where, "dim"), where + ".dim");
  if (c.dim != 1 && c.dim != 2) config_error(where + ".dim", "must be 1 or 2");
  c.lengths = j.contains("lengths") ? numbers_at(j, where, "lengths") : std::vector<double>(static_cast<std::size_t>(c.dim), 1.0);
  if (c.lengths.size() != static_cast<std::size_t>(c.dim)) config_error(where + ".lengths", "one entry per axis");
  c.resolution = as_integer(required(j, where, "resolution"), where + ".resolution");
  if (j.contains("hole")) c.hole = parse_hole(j.at("hole"));
  if (j.contains("coefficient")) c.coefficient = parse_coefficient(j.at("coefficient"), c.lengths);
  if (c.hole && c.coefficient) config_error(where, "perforated cells use P = 1; drop 'coefficient' or 'hole'");
  if (j.contains("delta")) c.delta = number_at(j, where, "delta");
  if (!(c.delta > 0.0)) config_error(where + ".delta", "must be positive");
  if (j.contains("tolerance")) c.tolerance = number_at(j, where, "tolerance");
  if (!(c.tolerance > 0.0)) config_error(where + ".tolerance", "must be positive");
  return c;
}

DomainConfig parse_domain(const json& j) {
  const std::string where = "domain";
  check_keys(j, where, {"dim", "lengths", "cells"});
  DomainConfig d;
  d.dim = as_integer(required(j, where, "dim"), where + ".dim");
  if (d.dim != 1 && d.dim != 2) config_error(where + ".dim", "must be 1 or 2");
  const auto lengths = j.contains("lengths") ? numbers_at(j, where, "lengths") : std::vector<double>(static_cast<std::size_t>(d.dim), 1.0);
  d.lengths = pair_of(lengths, where + ".lengths", d.dim);
  if (d.dim == 1) d.lengths[1] = 1.0;
  const auto cells = as_integers(required(j, where, "cells"), where + ".cells");
  if (cells.size() != static_cast<std::size_t>(d.dim)) config_error(where + ".cells", "one entry per axis");
  d.cells = {cells[0], d.dim == 2 ? cells[1] : 1};
  return d;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

InitialConfig parse_initial(const json& j) {
  const std::string where = "initial";
  if (!j.is_object()) config_error(where, "must be an object");
  InitialConfig ic;
  ic.type = as_string(required(j, where, "type"), where + ".type");
  if (ic.type == "constant") {
    check_keys(j, where, {"type", "values"});
    const Vector v = to_vector(numbers_at(j, where, "values"));
    ic.profile = [v](const std::array<double, 2>&) { return v; };
  } else if (ic.type == "cosine") {
    check_keys(j, where, {"type", "base", "amplitude", "modes", "lengths"});
    const Vector base = to_vector(numbers_at(j, where, "base"));
    const Vector amp = to_vector(numbers_at(j, where, "amplitude"));
    if (base.size() != amp.size()) config_error(where, "base and amplitude must have equal length");
    std::vector<int> modes{1, 0};
    if (j.contains("modes")) modes = as_integers(j.at("modes"), where + ".modes");
    if (modes.empty() || modes.size() > 2) config_error(where + ".modes", "one or two entries");
    modes.resize(2, 0);
    std::array<double, 2> L{1.0, 1.0};
    if (j.contains("lengths")) {
      const auto l = numbers_at(j, where, "lengths");
      for (std::size_t m = 0; m < std::min<std::size_t>(2, l.size()); ++m) L[m] = l[m];
    }
    ic.profile = [base, amp, modes, L](const std::array<double, 2>& x) -> Vector {
      double shape = 1.0;
      for (std::size_t m = 0; m < 2; ++m) shape *= std::cos(std::numbers::pi * modes[m] * x[m] / L[m]);
      return base + amp * shape;
    };
  } else if (ic.type == "bump") {
    check_keys(j, where, {"type", "base", "amplitude", "center", "width"});
    const Vector base = to_vector(numbers_at(j, where, "base"));
    const Vector amp = to_vector(numbers_at(j, where, "amplitude"));
    if (base.size() != amp.size()) config_error(where, "base and amplitude must have equal length");
    auto c = numbers_at(j, where, "center");
    c.resize(2, 0.0);
    const std::array<double, 2> center{c[0], c[1]};
    const double width = number_at(j, where, "width");
    if (!(width > 0.0)) config_error(where + ".width", "must be positive");
    ic.profile = [base, amp, center, width](const std::array<double, 2>& x) -> Vector {
      const double r2 = (x[0] - center[0]) * (x[0] - center[0]) + (x[1] - center[1]) * (x[1] - center[1]);
      return base + amp * std::exp(-r2 / (width * width));
    };
  } else if (ic.type == "piecewise") {
    check_keys(j, where, {"type", "axis", "breaks", "values"});
    const int axis = as_integer(required(j, where, "axis"), where + ".axis");
    if (axis < 0 || axis > 1) config_error(where + ".axis", "must be 0 or 1");
    const auto breaks = numbers_at(j, where, "breaks");
    const auto& values = required(j, where, "values");
    if (!values.is_array() || values.size() != breaks.size() + 1)
      config_error(where + ".values", "need one state per piece (breaks + 1)");
    std::vector<Vector> pieces;
    for (std::size_t i = 0; i < values.size(); ++i)
      pieces.push_back(to_vector(as_numbers(values[i], fmt::format("{}.values[{}]", where, i))));
    ic.profile = [axis, breaks, pieces](const std::array<double, 2>& x) -> Vector {
      std::size_t piece = 0;
      while (piece < breaks.size() && x[static_cast<std::size_t>(axis)] >= breaks[piece]) ++piece;
      return pieces[piece];
    };
  } else {
    config_error(where + ".type", fmt::format("unknown initial type '{}'", ic.type));
  }
  return ic;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_keys(doc, "document",
             {"model", "cell", "domain", "initial", "time", "cache", "micro", "sweep", "porosity_scaling", "seed"});
  RunConfig c;
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    check_keys(m, "model", {"name", "params"});
    c.model = ModelConfig{as_string(required(m, "model", "name"), "model.name"),
                          m.contains("params") ? m.at("params") : json::object()};
    if (!c.model->params.is_object()) config_error("model.params", "must be an object");
  }
  if (doc.contains("cell")) c.cell = parse_cell(doc.at("cell"));
  if (doc.contains("domain")) c.domain = parse_domain(doc.at("domain"));
  if (doc.contains("initial")) c.initial = parse_initial(doc.at("initial"));
  if (doc.contains("time")) {
    const auto& t = doc.at("time");
    check_keys(t, "time", {"dt", "t_end"});
    TimeConfig tc;
    if (t.contains("dt")) {
      tc.dt = number_at(t, "time", "dt");
      if (!(*tc.dt > 0.0)) config_error("time.dt", "must be positive");
    }
    tc.t_end = number_at(t, "time", "t_end");
    if (!(tc.t_end >= 0.0)) config_error("time.t_end", "must be nonnegative");
    c.time = tc;
  }
  if (doc.contains("cache")) {
    check_keys(doc.at("cache"), "cache", {"quantization"});
    c.quantization = number_at(doc.at("cache"), "cache", "quantization");
    if (!(c.quantization > 0.0)) config_error("cache.quantization", "must be positive");
  }
  if (doc.contains("micro")) {
    check_keys(doc.at("micro"), "micro", {"cells_per_period"});
    c.cells_per_period = as_integer(required(doc.at("micro"), "micro", "cells_per_period"), "micro.cells_per_period");
    if (c.cells_per_period < 8) config_error("micro.cells_per_period", "must be at least 8");
  }
  if (doc.contains("sweep")) {
    const auto& s = doc.at("sweep");
    check_keys(s, "sweep", {"eps", "macro_cells"});
    SweepConfig sc;
    sc.eps = numbers_at(s, "sweep", "eps");
    if (s.contains("macro_cells")) sc.macro_cells = as_integer(s.at("macro_cells"), "sweep.macro_cells");
    if (sc.macro_cells < 1) config_error("sweep.macro_cells", "must be positive");
    for (std::size_t i = 0; i < sc.eps.size(); ++i) {
      const double e = sc.eps[i];
      if (!(e > 0.0 && e <= 1.0) || std::abs(1.0 / e - std::round(1.0 / e)) > 1e-9 * (1.0 / e))
        config_error(fmt::format("sweep.eps[{}]", i), fmt::format("{} is not of the form 1/integer", e));
      if (i > 0 && !(e < sc.eps[i - 1])) config_error("sweep.eps", "must be strictly decreasing");
    }
    c.sweep = sc;
  }
  if (doc.contains("porosity_scaling")) {
    if (!doc.at("porosity_scaling").is_boolean()) config_error("porosity_scaling", "expected true or false");
    c.porosity_scaling = doc.at("porosity_scaling").get<bool>();
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) config_error("seed", "expected a nonnegative integer");
    c.seed = doc.at("seed").get<std::uint64_t>();
  }
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, fmt::format("cannot read '{}'", path.string()));
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Configuration, fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

namespace {

template <class T>
const T& need(const std::optional<T>& section, const char* name) {
  if (!section) config_error(name, "section is required for this command");
  return *section;
}

}  // namespace

DiffusionModel config_model(const RunConfig& config) {
  const auto& m = need(config.model, "model");
  return builtin_model(m.name, m.params);
}

CellGrid config_cell_grid(const RunConfig& config) {
  const auto& c = need(config.cell, "cell");
  return build_cell_grid(CellGeometry(c.dim, c.lengths, c.hole), c.resolution);
}

std::optional<PeriodicCoefficient> config_coefficient(const RunConfig& config, const CellGrid& grid) {
  const auto& c = need(config.cell, "cell");
  if (!c.coefficient) return std::nullopt;
  return sample_coefficient(*c.coefficient, grid);
}

MacroGrid config_domain(const RunConfig& config, std::optional<int> cells_override) {
  const auto& d = need(config.domain, "domain");
  auto cells = d.cells;
  if (cells_override) {
    cells[0] = *cells_override;
    if (d.dim == 2) cells[1] = *cells_override;
  }
  return MacroGrid(d.dim, d.lengths, cells);
}

StateField config_initial_state(const RunConfig& config, const DiffusionModel& model, const MacroGrid& grid) {
  const auto& ic = need(config.initial, "initial");
  static constexpr double nodes[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static constexpr double weights[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
  const int d = grid.dim();
  Matrix u(model.n, static_cast<Eigen::Index>(grid.cell_count()));
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto x0 = grid.center(c);
    Vector avg = Vector::Zero(model.n);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < (d == 2 ? 4 : 1); ++b) {
        std::array<double, 2> x{x0[0] + 0.5 * grid.spacing(0) * nodes[a], 0.0};
        double wgt = 0.5 * weights[a];
        if (d == 2) {
          x[1] = x0[1] + 0.5 * grid.spacing(1) * nodes[b];
          wgt *= 0.5 * weights[b];
        }
        const Vector v = ic.profile(x);
        if (v.size() != model.n)
          config_error("initial", fmt::format("profile has {} species, model has {}", v.size(), model.n));
        avg += wgt * v;
      }
    }
    if (!model.entropy.contains_closure(avg, 1e-12))
      config_error("initial", fmt::format("cell {} average lies outside the admissible region", c));
    u.col(static_cast<Eigen::Index>(c)) = avg;
  }
  return StateField(grid, u, 0.0);
}

double config_dt(const RunConfig& config) {
  const auto& t = need(config.time, "time");
  if (t.dt) return *t.dt;
  const auto& d = need(config.domain, "domain");
  const double L = std::max(d.lengths[0], d.dim == 2 ? d.lengths[1] : 0.0);
  return 1e-3 * L * L;
}

namespace {

CellSolveOptions solve_options(const RunConfig& config) {
  CellSolveOptions o;
  o.krylov.tolerance = need(config.cell, "cell").tolerance;
  return o;
}

}  // namespace

CellReport run_cell_problem(const RunConfig& config) {
  const CellGrid grid = config_cell_grid(config);
  const auto P = config_coefficient(config, grid);
  const auto opts = solve_options(config);
  auto cells = P ? solve_scalar_cell(*P, grid, opts) : solve_scalar_cell_perforated(grid, opts);
  auto tensor = dhom_from_cells(P ? &*P : nullptr, cells);
  return {std::move(cells), std::move(tensor)};
}

EffectiveTensor run_effective(const RunConfig& config, const json& state) {
  check_keys(state, "state", {"u"});
  const Vector u = to_vector(as_numbers(required(state, "state", "u"), "state.u"));
  const auto model = config_model(config);
  if (u.size() != model.n) config_error("state.u", fmt::format("expected {} species", model.n));
  if (!model.entropy.contains_closure(u, 1e-12)) config_error("state.u", "state lies outside the admissible region");
  const CellGrid grid = config_cell_grid(config);
  const auto P = config_coefficient(config, grid);
  const auto opts = solve_options(config);
  const double delta = config.cell->delta;
  if (model.kind == ModelKind::NonlocalDegenerate) {
    const auto dh = P ? dhom(*P, grid, opts) : dhom_perforated(grid, opts);
    return effective_tensor_nonlocal(model, u, dh);
  }
  return P ? effective_tensor_local(model, u, *P, grid, delta, opts)
           : effective_tensor_perforated(model, u, grid, delta, opts);
}

MacroRun run_macro(const RunConfig& config, std::optional<int> cells_override) {
  const auto model = config_model(config);
  const MacroGrid grid = config_domain(config, cells_override);
  const CellGrid cell = config_cell_grid(config);
  if (cell.dim() != grid.dim()) config_error("cell.dim", "must match domain.dim");
  const auto P = config_coefficient(config, cell);
  const auto opts = solve_options(config);
  const StateField initial = config_initial_state(config, model, grid);
  const auto& time = need(config.time, "time");

  StepperOptions stepper;
  if (config.porosity_scaling) stepper.storage_factor = cell.porosity();

  MacroRun run{{initial, {}, {}}, {}, {}};
  std::shared_ptr<TensorCache> cache;
  std::unique_ptr<FluxModel> flux;
  if (model.kind == ModelKind::NonlocalDegenerate) {
    const auto dh = P ? dhom(*P, cell, opts) : dhom_perforated(cell, opts);
    flux = dhom_flux(grid, model.n, dh);
  } else {
    const double delta = config.cell->delta;
    TensorCache::Assembler assemble = [model, cell, P, delta, opts](const Vector& uq) {
      return P ? effective_tensor_local(model, uq, *P, cell, delta, opts)
               : effective_tensor_perforated(model, uq, cell, delta, opts);
    };
    const std::string key = fmt::format("{}|{}|{}|{:.17g}", model.id, cell.id(), P ? P->label() : "1", delta);
    cache = std::make_shared<TensorCache>(std::move(assemble), key, config.quantization,
                                          model.entropy.kind() == Entropy::Kind::Simplex);
    flux = cached_tensor_flux(grid, model.n, cache);
  }
  run.flux = flux->describe();
  run.result = run_transient(model, *flux, initial, config_dt(config), time.t_end, stepper);
  if (cache) run.cache = cache->statistics();
  return run;
}

TransientResult run_micro(const RunConfig& config, double eps) {
  const auto model = config_model(config);
  const auto& c = need(config.cell, "cell");
  if (c.hole) config_error("cell.hole", "micro simulation of perforated domains is not supported");
  const auto& d = need(config.domain, "domain");
  if (c.dim != d.dim) config_error("cell.dim", "must match domain.dim");
  if (!(eps > 0.0) || !std::isfinite(eps)) config_error("eps", "must be positive");
  const CellGeometry geometry(c.dim, c.lengths);
  std::array<int, 2> cells{1, 1};
  for (int m = 0; m < d.dim; ++m) {
    const double periods = d.lengths[static_cast<std::size_t>(m)] / (eps * c.lengths[static_cast<std::size_t>(m)]);
    if (std::abs(periods - std::round(periods)) > 1e-9 * std::max(1.0, periods))
      config_error("eps", fmt::format("{} periods along axis {} is not an integer", periods, m + 1));
    cells[static_cast<std::size_t>(m)] = static_cast<int>(std::lround(periods)) * config.cells_per_period;
  }
  const MacroGrid grid(d.dim, d.lengths, cells);
  const CoefficientSpec P = c.coefficient ? *c.coefficient : CoefficientSpec{ConstantCoefficient{{1.0}}};
  const auto flux = micro_flux(grid, model.n, P, geometry, eps);
  const StateField initial = config_initial_state(config, model, grid);
  return run_transient(model, *flux, initial, config_dt(config), need(config.time, "time").t_end);
}

StateField average_onto(const StateField& fine, const MacroGrid& coarse) {
  const MacroGrid& f = fine.grid;
  if (f.dim() != coarse.dim()) fail(ErrorKind::Input, "grids differ in dimension");
  std::array<int, 2> ratio{1, 1};
  for (int m = 0; m < f.dim(); ++m) {
    if (std::abs(f.length(m) - coarse.length(m)) > 1e-12 * f.length(m) || f.cells(m) % coarse.cells(m) != 0)
      fail(ErrorKind::Configuration, "fine grid cells must nest in the coarse grid cells");
    ratio[static_cast<std::size_t>(m)] = f.cells(m) / coarse.cells(m);
  }
  Matrix u = Matrix::Zero(fine.u.rows(), static_cast<Eigen::Index>(coarse.cell_count()));
  for (int j = 0; j < f.cells(1); ++j)
    for (int i = 0; i < f.cells(0); ++i) {
      const auto target = static_cast<Eigen::Index>(coarse.index(i / ratio[0], j / ratio[1]));
      u.col(target) += fine.u.col(static_cast<Eigen::Index>(f.index(i, j)));
    }
  u /= static_cast<double>(ratio[0] * ratio[1]);
  StateField out(coarse, u, fine.t);
  return out;
}

ErrorNorms field_difference(const StateField& a, const StateField& b) {
  if (a.u.rows() != b.u.rows() || a.u.cols() != b.u.cols()) fail(ErrorKind::Input, "fields have different shapes");
  const double vol = a.grid.cell_volume();
  ErrorNorms e;
  double sq = 0.0;
  for (Eigen::Index c = 0; c < a.u.cols(); ++c)
    for (Eigen::Index i = 0; i < a.u.rows(); ++i) {
      const double diff = std::abs(a.u(i, c) - b.u(i, c));
      e.l1 += vol * diff;
      sq += vol * diff * diff;
      e.linf = std::max(e.linf, diff);
    }
  e.l2 = std::sqrt(sq);
  return e;
}

LogFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::Input, "a log-log fit needs at least two points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += std::log(x[i]);
    sy += std::log(y[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  LogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::log(y[i]) - (fit.intercept + fit.slope * std::log(x[i]));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

ConvergenceReport eps_sweep(const RunConfig& config) {
  const auto& sweep = need(config.sweep, "sweep");
  const auto model = config_model(config);
  ConvergenceReport report;
  report.model_id = model.id;
  report.macro_cells = sweep.macro_cells;
  report.cells_per_period = config.cells_per_period;
  report.dt = config_dt(config);
  report.t_end = need(config.time, "time").t_end;

  const auto macro = run_macro(config, sweep.macro_cells);
  if (!macro.result.error.empty())
    throw SolverError(ErrorKind::Solver, "macro reference run failed: " + macro.result.error, 0.0);
  report.cache = macro.cache;
  const auto fine = run_macro(config, 2 * sweep.macro_cells);
  if (!fine.result.error.empty())
    throw SolverError(ErrorKind::Solver, "macro self-check run failed: " + fine.result.error, 0.0);
  const StateField& reference = macro.result.final_state;
  report.reference_gap = field_difference(average_onto(fine.result.final_state, reference.grid), reference).l2;

  for (double eps : sweep.eps) {
    SweepRow row;
    row.eps = eps;
    try {
      const auto micro = run_micro(config, eps);
      row.micro_cells = micro.final_state.grid.cell_count();
      if (!micro.error.empty()) {
        row.failure = micro.error;
      } else {
        const auto e = field_difference(average_onto(micro.final_state, reference.grid), reference);
        row.l1 = e.l1;
        row.l2 = e.l2;
        row.linf = e.linf;
      }
    } catch (const SolverError& e) {
      row.failure = e.what();
    }
    if (!row.failure.empty()) {
      row.l1 = row.l2 = row.linf = std::numeric_limits<double>::quiet_NaN();
    }
    report.rows.push_back(row);
  }

  std::vector<double> xs, ys;
  bool all_ok = true;
  for (const auto& r : report.rows) {
    if (!r.failure.empty() || !(r.l2 > 0.0)) {
      all_ok = all_ok && r.failure.empty();
      continue;
    }
    xs.push_back(r.eps);
    ys.push_back(r.l2);
  }
  report.monotone = all_ok && !report.rows.empty();
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    report.monotone = report.monotone && report.rows[i].l2 < report.rows[i - 1].l2;
  if (xs.size() >= 3) {
    const auto fit = fit_log_log(xs, ys);
    report.rate = fit.slope;
    report.intercept = fit.intercept;
    report.rate_residual = fit.residual;
  }
  double smallest = std::numeric_limits<double>::infinity();
  for (double y : ys) smallest = std::min(smallest, y);
  report.reference_converged = !ys.empty() && report.reference_gap < 0.1 * smallest;
  return report;
}

std::string sweep_csv(const ConvergenceReport& report) {
  std::string out = "eps,l1_error,l2_error,linf_error\n";
  for (const auto& r : report.rows) out += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", r.eps, r.l1, r.l2, r.linf);
  return out;
}

std::string sweep_svg(const ConvergenceReport& report) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : report.rows)
    if (r.failure.empty() && r.l2 > 0.0) pts.emplace_back(std::log10(r.eps), std::log10(r.l2));
  if (pts.empty()) return {};

  constexpr double W = 640, H = 480, left = 80, right = 30, top = 40, bottom = 60;
  double x0 = pts.front().first, x1 = x0, y0 = pts.front().second, y1 = y0;
  for (const auto& [x, y] : pts) {
    x0 = std::min(x0, x); x1 = std::max(x1, x);
    y0 = std::min(y0, y); y1 = std::max(y1, y);
  }
  x0 = std::floor(x0 - 0.05); x1 = std::ceil(x1 + 0.05);
  y0 = std::floor(y0 - 0.05); y1 = std::ceil(y1 + 0.05);
  const auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  const auto sy = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<text x=\"{:.2f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">"
                   "L2 error vs eps ({})</text>\n",
                   0.5 * W, report.model_id);
  s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" stroke=\"black\"/>\n",
                   left, top, W - left - right, H - top - bottom);
  for (int e = static_cast<int>(x0); e <= static_cast<int>(x1); ++e) {
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ccc\"/>\n", sx(e), top,
                     H - bottom);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"middle\">1e{}</text>\n",
                     sx(e), H - bottom + 18, e);
  }
  for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e) {
    s += fmt::format("<line x1=\"{1:.2f}\" y1=\"{0:.2f}\" x2=\"{2:.2f}\" y2=\"{0:.2f}\" stroke=\"#ccc\"/>\n", sy(e), left,
                     W - right);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"end\">1e{}</text>\n",
                     left - 6, sy(e) + 4, e);
  }
  s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"14\" "
                   "text-anchor=\"middle\">eps</text>\n",
                   left + 0.5 * (W - left - right), H - 15);
  s += fmt::format("<text x=\"20\" y=\"{0:.2f}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 20 {0:.2f})\">L2 error</text>\n",
                   top + 0.5 * (H - top - bottom));
  if (report.rate && report.intercept) {
    const double a = pts.front().first, b = pts.back().first;
    const double ya = (*report.intercept + *report.rate * a * std::log(10.0)) / std::log(10.0);
    const double yb = (*report.intercept + *report.rate * b * std::log(10.0)) / std::log(10.0);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#d62728\" "
                     "stroke-dasharray=\"6 4\"/>\n",
                     sx(a), sy(ya), sx(b), sy(yb));
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">"
                     "fitted rate {:.3f}</text>\n",
                     left + 10, top + 18, *report.rate);
  }
  for (const auto& [x, y] : pts)
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"#1f77b4\"/>\n", sx(x), sy(y));
  s += "</svg>\n";
  return s;
}

nlohmann::json to_json(const ConvergenceReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j{{"eps", row.eps}, {"micro_cells", row.micro_cells}};
    if (row.failure.empty()) {
      j["l1_error"] = row.l1;
      j["l2_error"] = row.l2;
      j["linf_error"] = row.linf;
    } else {
      j["failure"] = row.failure;
    }
    rows.push_back(j);
  }
  json out{{"model", r.model_id},
           {"rows", rows},
           {"monotone", r.monotone},
           {"macro_cells", r.macro_cells},
           {"cells_per_period", r.cells_per_period},
           {"dt", r.dt},
           {"t_end", r.t_end},
           {"reference_check",
            {{"gap_n_vs_2n", r.reference_gap}, {"converged", r.reference_converged}, {"threshold", "10% of smallest l2 error"}}},
           {"cache", {{"hits", r.cache.hits}, {"misses", r.cache.misses}, {"entries", r.cache.entries}}}};
  out["rate"] = r.rate ? json(*r.rate) : json(nullptr);
  out["rate_residual"] = r.rate_residual ? json(*r.rate_residual) : json(nullptr);
  return out;
}

std::string state_csv(const StateField& state) {
  std::string out = state.grid.dim() == 1 ? "x" : "x,y";
  for (int i = 0; i < state.species(); ++i) out += fmt::format(",u_{}", i + 1);
  out += "\n";
  for (std::size_t c = 0; c < state.grid.cell_count(); ++c) {
    const auto x = state.grid.center(c);
    out += fmt::format("{:.17g}", x[0]);
    if (state.grid.dim() == 2) out += fmt::format(",{:.17g}", x[1]);
    for (int i = 0; i < state.species(); ++i) out += fmt::format(",{:.17g}", state.u(i, static_cast<Eigen::Index>(c)));
    out += "\n";
  }
  return out;
}

std::string correctors_csv(const CellSolutionSet& cells) {
  const CellGrid& g = cells.grid;
  std::string out = g.dim() == 1 ? "y1" : "y1,y2";
  std::vector<std::pair<std::size_t, Eigen::Index>> columns;  // (field, offset)
  const auto nn = static_cast<Eigen::Index>(g.node_count());
  if (cells.kind == CellSolutionSet::Kind::Scalar) {
    for (int l = 0; l < g.dim(); ++l) {
      out += fmt::format(",w{}", l + 1);
      columns.emplace_back(static_cast<std::size_t>(l), 0);
    }
  } else {
    for (int k = 0; k < g.dim(); ++k)
      for (int l = 0; l < cells.species; ++l)
        for (int j = 0; j < cells.species; ++j) {
          out += fmt::format(",W{}{}_{}", k + 1, l + 1, j + 1);
          columns.emplace_back(static_cast<std::size_t>(k * cells.species + l), j * nn);
        }
  }
  out += "\n";
  for (std::size_t node = 0; node < g.node_count(); ++node) {
    const auto y = g.node_coordinate(node);
    out += fmt::format("{:.17g}", y[0]);
    if (g.dim() == 2) out += fmt::format(",{:.17g}", y[1]);
    for (const auto& [f, off] : columns)
      out += fmt::format(",{:.17g}", cells.fields[f][off + static_cast<Eigen::Index>(node)]);
    out += "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorKind::Io, fmt::format("cannot create '{}': {}", path.parent_path().string(), ec.message()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
}

namespace {

void prepare(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out))
    fail(ErrorKind::Io, fmt::format("cannot create output directory '{}'", out.string()));
}

json run_summary(const TransientResult& r) {
  return {{"steps", r.log.size() > 0 ? r.log.size() - 1 : 0},
          {"t_final", r.final_state.t},
          {"max_relative_mass_drift", r.log.max_relative_mass_drift()},
          {"max_entropy_increase", r.log.size() > 1 ? json(r.log.max_entropy_increase()) : json(nullptr)},
          {"min_production", r.log.min_production()},
          {"error", r.error.empty() ? json(nullptr) : json(r.error)}};
}

void emit_transient(const TransientResult& r, json summary, const std::filesystem::path& out) {
  write_text(out / "trajectory.csv", r.log.to_csv());
  write_text(out / "final_state.csv", state_csv(r.final_state));
  write_text(out / "run.json", summary.dump(2) + "\n");
  if (!r.error.empty()) throw SolverError(ErrorKind::Step, "run stopped early: " + r.error, 0.0);
}

}  // namespace

void emit_cell(const RunConfig& config, const std::filesystem::path& out) {
  prepare(out);
  const auto report = run_cell_problem(config);
  const CellGrid& g = report.cells.grid;
  write_text(out / "dhom.json", to_json(report.dhom).dump(2) + "\n");
  write_text(out / "dhom.csv", to_csv(report.dhom));
  write_text(out / "correctors.csv", correctors_csv(report.cells));
  json info{{"grid", g.id()},
            {"resolution", g.resolution()},
            {"porosity", g.porosity()},
            {"fluid_measure", g.fluid_measure()},
            {"solver", report.cells.solver},
            {"residuals", report.cells.residual_norms},
            {"iterations", report.cells.iterations}};
  write_text(out / "cell.json", info.dump(2) + "\n");
}

void emit_effective(const RunConfig& config, const json& state, const std::filesystem::path& out) {
  prepare(out);
  const auto tensor = run_effective(config, state);
  write_text(out / "tensor.json", to_json(tensor).dump(2) + "\n");
}

void emit_macro(const RunConfig& config, const std::filesystem::path& out) {
  prepare(out);
  const auto run = run_macro(config);
  json summary = run_summary(run.result);
  summary["model"] = config_model(config).id;
  summary["flux"] = run.flux;
  summary["porosity_scaling"] = config.porosity_scaling;
  summary["cache"] = {{"hits", run.cache.hits},
                      {"misses", run.cache.misses},
                      {"entries", run.cache.entries},
                      {"hit_rate", run.cache.hit_rate()},
                      {"quantization", config.quantization}};
  emit_transient(run.result, summary, out);
}

void emit_micro(const RunConfig& config, double eps, const std::filesystem::path& out) {
  prepare(out);
  const auto result = run_micro(config, eps);
  json summary = run_summary(result);
  summary["model"] = config_model(config).id;
  summary["eps"] = eps;
  summary["cells"] = result.final_state.grid.cell_count();
  emit_transient(result, summary, out);
}

bool emit_sweep(const RunConfig& config, const std::filesystem::path& out) {
  prepare(out);
  const auto report = eps_sweep(config);
  write_text(out / "sweep.csv", sweep_csv(report));
  const auto svg = sweep_svg(report);
  if (!svg.empty()) write_text(out / "sweep.svg", svg);
  write_text(out / "sweep.json", to_json(report).dump(2) + "\n");
  return std::all_of(report.rows.begin(), report.rows.end(), [](const SweepRow& r) { return r.failure.empty(); });
}

}  // namespace xdhom
