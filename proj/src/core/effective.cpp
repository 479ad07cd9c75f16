#include "core/effective.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

Matrix EffectiveTensor::matrix() const {
  if (kind != Kind::TwoIndex) fail(ErrorKind::Input, "matrix() needs a two-index tensor");
  Matrix M(dim, dim);
  for (int k = 0; k < dim; ++k)
    for (int l = 0; l < dim; ++l) M(k, l) = (*this)(k, l);
  return M;
}

Vector clamp_state(const Vector& u, double delta) {
  return (u.array() + 0.5 * delta) / (1.0 + delta);
}

namespace {

void require_local(const DiffusionModel& model) {
  if (model.kind != ModelKind::LocalDegenerate)
    fail(ErrorKind::Parameter, fmt::format("model '{}' is not of local-degenerate kind", model.name));
}

void require_state(const DiffusionModel& model, const Vector& u) {
  if (u.size() != model.n) fail(ErrorKind::Input, fmt::format("state has {} components, model needs {}", u.size(), model.n));
  if (!u.allFinite() || !model.entropy.contains_closure(u, 1e-12))
    fail(ErrorKind::Input, "state lies outside the admissible region");
}

Vector degeneracy_scale(const DiffusionModel& model, const Vector& ud) {
  Vector S(model.n);
  for (int j = 0; j < model.n; ++j) {
    const double s = model.s[static_cast<std::size_t>(j)];
    S[j] = (s + 1.0) * std::pow(ud[j], s);
  }
  return S;
}

struct CellAverages {
  std::vector<double> p;  // per axis
  double fluid = 0.0;
};

CellAverages coefficient_averages(const PeriodicCoefficient* P, const CellGrid& grid) {
  CellAverages out;
  out.fluid = grid.fluid_measure();
  out.p.assign(static_cast<std::size_t>(grid.dim()), 0.0);
  const double vol = grid.element_volume();
  for (int m = 0; m < grid.dim(); ++m) {
    double sum = 0.0;
    for (std::size_t e = 0; e < grid.element_count(); ++e)
      if (grid.fluid(e)) sum += vol * (P ? P->value(m, e) : 1.0);
    out.p[static_cast<std::size_t>(m)] = sum / out.fluid;
  }
  return out;
}

/// Average over Y1 of P_m d_m f for a node field f.
double flux_average(const PeriodicCoefficient* P, const CellGrid& grid, const Eigen::Ref<const Vector>& f, int m,
                    double fluid) {
  const double vol = grid.element_volume();
  double sum = 0.0;
  for (std::size_t e = 0; e < grid.element_count(); ++e) {
    if (!grid.fluid(e)) continue;
    sum += vol * (P ? P->value(m, e) : 1.0) * element_gradient(grid, f, e, m);
  }
  return sum / fluid;
}

std::string state_text(const Vector& u) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < u.size(); ++i) s += fmt::format("{}{:.17g}", i ? "," : "", u[i]);
  return s + ")";
}

}  // namespace

Matrix ahat(const DiffusionModel& model, const Vector& u, double delta) {
  require_local(model);
  require_state(model, u);
  if (!(delta >= 0.0)) fail(ErrorKind::Parameter, "delta must be nonnegative");
  const Vector ud = clamp_state(u, delta);
  const Vector S = degeneracy_scale(model, ud);
  Matrix out = model.A(ud);
  for (int j = 0; j < model.n; ++j) out.col(j) /= S[j];
  return out;
}

EffectiveTensor dhom_from_cells(const PeriodicCoefficient* P, const CellSolutionSet& cells) {
  if (cells.kind != CellSolutionSet::Kind::Scalar) fail(ErrorKind::Input, "D_hom needs scalar cell solutions");
  const CellGrid& grid = cells.grid;
  const int d = grid.dim();
  const auto avg = coefficient_averages(P, grid);
  EffectiveTensor t;
  t.kind = EffectiveTensor::Kind::TwoIndex;
  t.dim = d;
  t.values.assign(static_cast<std::size_t>(d * d), 0.0);
  for (int k = 0; k < d; ++k) {
    for (int l = 0; l < d; ++l) {
      const double corr = flux_average(P, grid, cells.scalar(l), k, avg.fluid);
      t.values[static_cast<std::size_t>(k * d + l)] = (k == l ? avg.p[static_cast<std::size_t>(k)] : 0.0) + corr;
    }
  }
  t.provenance = fmt::format("scalar cell problems; grid {}; coefficient {}; solver {}", grid.id(),
                             P ? P->label() : std::string("1 on Y1"), cells.solver);
  return t;
}

EffectiveTensor dhom(const PeriodicCoefficient& P, const CellGrid& grid, const CellSolveOptions& options) {
  return dhom_from_cells(&P, solve_scalar_cell(P, grid, options));
}

EffectiveTensor dhom_perforated(const CellGrid& grid, const CellSolveOptions& options) {
  return dhom_from_cells(nullptr, solve_scalar_cell_perforated(grid, options));
}

EffectiveTensor four_index_from_cells(const DiffusionModel& model, const Vector& u, const PeriodicCoefficient* P,
                                      const CellSolutionSet& cells) {
  require_local(model);
  require_state(model, u);
  if (cells.kind != CellSolutionSet::Kind::Coupled || cells.species != model.n)
    fail(ErrorKind::Input, "B needs coupled cell solutions with one component per species");
  const CellGrid& grid = cells.grid;
  const int n = model.n;
  const int d = grid.dim();
  const Vector ud = clamp_state(u, cells.delta);
  const Vector S = degeneracy_scale(model, ud);
  const Matrix A = model.A(ud);
  const auto avg = coefficient_averages(P, grid);

  EffectiveTensor t;
  t.kind = EffectiveTensor::Kind::FourIndex;
  t.species = n;
  t.dim = d;
  t.delta = cells.delta;
  t.state = std::vector<double>(u.data(), u.data() + u.size());
  const auto size = static_cast<std::size_t>(n * n * d * d);
  t.factor.assign(size, 0.0);
  t.values.assign(size, 0.0);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < d; ++m)
        for (int k = 0; k < d; ++k) {
          const double base = (j == l && k == m) ? avg.p[static_cast<std::size_t>(m)] : 0.0;
          const double corr = flux_average(P, grid, cells.component(k, l, j), m, avg.fluid);
          t.factor[t.index(j, l, m, k)] = base + S[l] / S[j] * corr;
        }
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < d; ++m)
        for (int k = 0; k < d; ++k) {
          double sum = 0.0;
          for (int j = 0; j < n; ++j) sum += A(i, j) * t.factor[t.index(j, l, m, k)];
          t.values[t.index(i, l, m, k)] = sum;
        }
  t.provenance = fmt::format("coupled cell problems; model {}; state {}; delta {:.3g}; grid {}; coefficient {}; solver {}",
                             model.id, state_text(u), cells.delta, grid.id(),
                             P ? P->label() : std::string("1 on Y1"), cells.solver);
  return t;
}

EffectiveTensor effective_tensor_local(const DiffusionModel& model, const Vector& u, const PeriodicCoefficient& P,
                                       const CellGrid& grid, double delta, const CellSolveOptions& options) {
  const auto cells = solve_coupled_cell(ahat(model, u, delta), &P, grid, delta, options);
  return four_index_from_cells(model, u, &P, cells);
}

EffectiveTensor effective_tensor_perforated(const DiffusionModel& model, const Vector& u, const CellGrid& grid,
                                            double delta, const CellSolveOptions& options) {
  const auto cells = solve_coupled_cell(ahat(model, u, delta), nullptr, grid, delta, options);
  return four_index_from_cells(model, u, nullptr, cells);
}

EffectiveTensor effective_tensor_nonlocal(const DiffusionModel& model, const Vector& u, const EffectiveTensor& dh) {
  if (model.kind != ModelKind::NonlocalDegenerate)
    fail(ErrorKind::Parameter, fmt::format("model '{}' is not of nonlocal kind", model.name));
  if (dh.kind != EffectiveTensor::Kind::TwoIndex) fail(ErrorKind::Input, "expected a two-index D_hom");
  require_state(model, u);
  const int n = model.n;
  const int d = dh.dim;
  const Matrix A = model.A(u);
  EffectiveTensor t;
  t.kind = EffectiveTensor::Kind::FourIndex;
  t.species = n;
  t.dim = d;
  t.state = std::vector<double>(u.data(), u.data() + u.size());
  const auto size = static_cast<std::size_t>(n * n * d * d);
  t.factor.assign(size, 0.0);
  t.values.assign(size, 0.0);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < d; ++m)
        for (int k = 0; k < d; ++k) {
          if (i == l) t.factor[t.index(i, l, m, k)] = dh(m, k);
          t.values[t.index(i, l, m, k)] = A(i, l) * dh(m, k);
        }
  t.provenance = fmt::format("D_hom A(u); model {}; state {}; {}", model.id, state_text(u), dh.provenance);
  return t;
}

nlohmann::json to_json(const EffectiveTensor& t) {
  nlohmann::json j;
  if (t.kind == EffectiveTensor::Kind::TwoIndex) {
    j["kind"] = "two_index";
    j["index_order"] = {"k", "l"};
    j["shape"] = {t.dim, t.dim};
  } else {
    j["kind"] = "four_index";
    j["index_order"] = {"i", "l", "m", "k"};
    j["shape"] = {t.species, t.species, t.dim, t.dim};
    j["state"] = t.state ? nlohmann::json(*t.state) : nlohmann::json(nullptr);
    j["delta"] = t.delta;
  }
  j["values"] = t.values;
  j["provenance"] = t.provenance;
  return j;
}

std::string to_csv(const EffectiveTensor& t) {
  if (t.kind != EffectiveTensor::Kind::TwoIndex) fail(ErrorKind::Input, "CSV export needs a two-index tensor");
  std::string out = "k,l,value\n";
  for (int k = 0; k < t.dim; ++k)
    for (int l = 0; l < t.dim; ++l) out += fmt::format("{},{},{:.17g}\n", k + 1, l + 1, t(k, l));
  return out;
}

TensorCache::TensorCache(Assembler assemble, std::string key_prefix, double quantization, bool simplex)
    : assemble_(std::move(assemble)), prefix_(std::move(key_prefix)), q_(quantization), simplex_(simplex) {
  if (!(quantization > 0.0) || !std::isfinite(quantization))
    fail(ErrorKind::Parameter, "cache quantization must be positive");
}

std::vector<long> TensorCache::lattice(const Vector& u) const {
  const long top = static_cast<long>(std::floor(1.0 / q_ + 1e-9));
  std::vector<long> idx(static_cast<std::size_t>(u.size()));
  const auto fill = [&](auto round) {
    long total = 0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const long v = std::clamp(static_cast<long>(round(u[i] / q_)), 0L, top);
      idx[static_cast<std::size_t>(i)] = v;
      total += v;
    }
    return total;
  };
  if (!u.allFinite()) fail(ErrorKind::Input, "cannot quantize a non-finite state");
  long total = fill([](double x) { return std::round(x); });
  if (simplex_ && total > top) {
    total = fill([](double x) { return std::floor(x); });
    while (total > top) {
      auto it = std::max_element(idx.begin(), idx.end());
      --*it;
      --total;
    }
  }
  return idx;
}

Vector TensorCache::quantize(const Vector& u) const {
  const auto idx = lattice(u);
  Vector out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = static_cast<double>(idx[static_cast<std::size_t>(i)]) * q_;
  return out;
}

std::shared_ptr<const EffectiveTensor> TensorCache::lookup(const Vector& u) {
  const auto idx = lattice(u);
  std::string key = prefix_;
  for (long v : idx) key += fmt::format("|{}", v);
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      lock.unlock();
      std::unique_lock count(mutex_);
      ++hits_;
      return it->second;
    }
  }
  auto tensor = std::make_shared<const EffectiveTensor>(assemble_(quantize(u)));
  std::unique_lock lock(mutex_);
  ++misses_;
  auto [it, inserted] = entries_.emplace(key, std::move(tensor));
  return it->second;
}

CacheStatistics TensorCache::statistics() const {
  std::shared_lock lock(mutex_);
  return {hits_, misses_, entries_.size()};
}

}  // namespace xdhom
