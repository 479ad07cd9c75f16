#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/cellproblem.hpp"
#include "core/geometry.hpp"
#include "core/models.hpp"

namespace xdhom {

constexpr double kDefaultDelta = 1e-6;

/// Effective tensor. The four-index kind stores B[i][l][m][k] flattened in
/// that order (i, l species; m, k space). The two-index kind stores
/// D_hom[k][l] row-major.
struct EffectiveTensor {
  enum class Kind { FourIndex, TwoIndex };

  Kind kind = Kind::TwoIndex;
  int species = 1;
  int dim = 1;
  std::vector<double> values;
  /// Four-index only: K[j][l][m][k] with B[i][l][m][k] = sum_j a_ij(u_delta) K[j][l][m][k].
  std::vector<double> factor;
  std::optional<std::vector<double>> state;
  double delta = 0.0;
  std::string provenance;

  double operator()(int i, int l, int m, int k) const { return values[index(i, l, m, k)]; }
  double operator()(int k, int l) const { return values[static_cast<std::size_t>(k * dim + l)]; }
  double K(int j, int l, int m, int k) const { return factor[index(j, l, m, k)]; }
  std::size_t index(int i, int l, int m, int k) const {
    return static_cast<std::size_t>(((i * species + l) * dim + m) * dim + k);
  }
  /// D_hom as a matrix (two-index kind).
  Matrix matrix() const;
};

/// u_delta = (u + delta/2) / (1 + delta).
Vector clamp_state(const Vector& u, double delta);

/// Ahat_ij = a_ij(u_delta) / ((s_j + 1) u_delta_j^{s_j}).
Matrix ahat(const DiffusionModel& model, const Vector& u, double delta);

/// D_hom from scalar correctors. `P` null means P = 1 with averages over Y1.
EffectiveTensor dhom_from_cells(const PeriodicCoefficient* P, const CellSolutionSet& cells);
EffectiveTensor dhom(const PeriodicCoefficient& P, const CellGrid& grid, const CellSolveOptions& options = {});
EffectiveTensor dhom_perforated(const CellGrid& grid, const CellSolveOptions& options = {});

/// B(u) from coupled correctors solved with ahat(model, u, delta).
EffectiveTensor four_index_from_cells(const DiffusionModel& model, const Vector& u, const PeriodicCoefficient* P,
                                      const CellSolutionSet& cells);
EffectiveTensor effective_tensor_local(const DiffusionModel& model, const Vector& u, const PeriodicCoefficient& P,
                                       const CellGrid& grid, double delta = kDefaultDelta,
                                       const CellSolveOptions& options = {});
/// Perforated cell, P = 1, averages normalized by |Y1|.
EffectiveTensor effective_tensor_perforated(const DiffusionModel& model, const Vector& u, const CellGrid& grid,
                                            double delta = kDefaultDelta, const CellSolveOptions& options = {});
/// Nonlocal kind: B[i][l][m][k] = a_il(u) D_hom[m][k].
EffectiveTensor effective_tensor_nonlocal(const DiffusionModel& model, const Vector& u, const EffectiveTensor& dhom);

/// JSON with the index order spelled out; values listed in (i, l, m, k) or
/// (k, l) order.
nlohmann::json to_json(const EffectiveTensor& tensor);
/// Two-index kind only: header "k,l,value".
std::string to_csv(const EffectiveTensor& tensor);

struct CacheStatistics {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t entries = 0;
  double hit_rate() const {
    const auto total = hits + misses;
    return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  }
};

/// Memoizes tensors over states quantized to the lattice q Z, clipped to the
/// closure of G. When rounding pushes a simplex state past sum = 1 the
/// components are floored instead, so that corner can sit up to q away.
class TensorCache {
 public:
  using Assembler = std::function<EffectiveTensor(const Vector& quantized)>;

  TensorCache(Assembler assemble, std::string key_prefix, double quantization, bool simplex);

  std::shared_ptr<const EffectiveTensor> lookup(const Vector& u);
  Vector quantize(const Vector& u) const;
  CacheStatistics statistics() const;
  double quantization() const { return q_; }

 private:
  std::vector<long> lattice(const Vector& u) const;

  Assembler assemble_;
  std::string prefix_;
  double q_;
  bool simplex_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const EffectiveTensor>> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace xdhom
