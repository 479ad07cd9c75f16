#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace xdhom {

enum class HoleShape { Box, Ball };

/// Reference hole Y0. For a box, `size` holds the side lengths; for a ball,
/// `size[0]` is the radius.
struct HoleSpec {
  HoleShape shape = HoleShape::Box;
  std::array<double, 2> center{0.5, 0.5};
  std::array<double, 2> size{0.5, 0.5};

  /// Open-set membership test.
  bool contains(std::span<const double> y) const;
};

/// The periodicity cell Y = (0,b1) x ... x (0,bd), optionally perforated.
class CellGeometry {
 public:
  CellGeometry(int dim, std::vector<double> lengths,
               std::optional<HoleSpec> hole = std::nullopt);

  static CellGeometry unit(int dim, std::optional<HoleSpec> hole = std::nullopt);

  int dim() const { return dim_; }
  const std::vector<double>& lengths() const { return lengths_; }
  double length(int axis) const { return lengths_[static_cast<std::size_t>(axis)]; }
  const std::optional<HoleSpec>& hole() const { return hole_; }
  double measure() const;

 private:
  int dim_;
  std::vector<double> lengths_;
  std::optional<HoleSpec> hole_;
};

/// Uniform periodic tensor grid on Y with N elements and N nodes per axis
/// (node N is identified with node 0). Elements whose center lies in the
/// hole are masked out.
class CellGrid {
 public:
  CellGrid(CellGeometry geometry, int resolution);

  const CellGeometry& geometry() const { return geometry_; }
  int dim() const { return geometry_.dim(); }
  int resolution() const { return resolution_; }
  double spacing(int axis) const;
  double element_volume() const;

  std::size_t element_count() const { return count_; }
  std::size_t node_count() const { return count_; }

  std::array<int, 2> multi_index(std::size_t linear) const;
  std::size_t linear_index(int i, int j = 0) const;

  std::array<double, 2> element_center(std::size_t e) const;
  std::array<double, 2> node_coordinate(std::size_t node) const;

  /// Corner nodes of element e in tensor order (x fastest). 2 entries in
  /// 1-D, 4 in 2-D.
  std::array<std::size_t, 4> element_nodes(std::size_t e) const;
  int nodes_per_element() const { return dim() == 1 ? 2 : 4; }

  bool fluid(std::size_t e) const { return mask_[e] != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  std::size_t fluid_element_count() const { return fluid_elements_; }

  /// Nodes touching at least one fluid element.
  const std::vector<std::uint8_t>& active_nodes() const { return active_; }

  double cell_measure() const { return geometry_.measure(); }
  double fluid_measure() const;
  double porosity() const { return fluid_measure() / cell_measure(); }
  bool perforated() const { return geometry_.hole().has_value(); }

  /// Stable textual identity used in cache keys and provenance.
  std::string id() const;

 private:
  CellGeometry geometry_;
  int resolution_;
  std::size_t count_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::uint8_t> active_;
  std::size_t fluid_elements_ = 0;
};

CellGrid build_cell_grid(const CellGeometry& geometry, int resolution);

// Coefficient descriptions. Each yields the diagonal P(y) = diag(P_1..P_d).

struct ConstantCoefficient {
  std::vector<double> values;  // one per axis, or a single isotropic value
};

/// Piecewise-constant phases along one axis. `values[j]` applies on the
/// j-th segment between consecutive `breaks`.
struct LayeredCoefficient {
  int axis = 0;
  std::vector<double> breaks;
  std::vector<std::vector<double>> values;
};

/// Axis-aligned box inclusion [lo, hi) with its own values.
struct InclusionCoefficient {
  std::vector<double> lo, hi;
  std::vector<double> inside, outside;
};

struct ExpressionCoefficient {
  std::function<std::vector<double>(std::span<const double>)> fn;
  std::string label;
};

using CoefficientSpec = std::variant<ConstantCoefficient, LayeredCoefficient,
                                     InclusionCoefficient, ExpressionCoefficient>;

/// P_k(y) = mean_k + amplitude_k * sin(2 pi y_{axis_k} / b_{axis_k}).
CoefficientSpec sinusoid_coefficient(std::vector<double> mean,
                                     std::vector<double> amplitude,
                                     std::vector<int> axis,
                                     std::vector<double> lengths);

/// Evaluates P at a point of Y. Returns `dim` values.
std::vector<double> evaluate_coefficient(const CoefficientSpec& spec,
                                         std::span<const double> y, int dim);

std::string describe(const CoefficientSpec& spec);

/// Element-center samples of P on a CellGrid.
class PeriodicCoefficient {
 public:
  PeriodicCoefficient(int dim, std::size_t elements, std::vector<double> values,
                      std::string label);

  int dim() const { return dim_; }
  std::size_t element_count() const { return elements_; }
  double value(int axis, std::size_t e) const {
    return values_[static_cast<std::size_t>(axis) * elements_ + e];
  }
  double lower_bound() const { return lower_bound_; }
  double upper_bound() const { return upper_bound_; }
  const std::string& label() const { return label_; }

 private:
  int dim_;
  std::size_t elements_;
  std::vector<double> values_;  // axis-major
  double lower_bound_;
  double upper_bound_;
  std::string label_;
};

PeriodicCoefficient sample_coefficient(const CoefficientSpec& spec, const CellGrid& grid);

}  // namespace xdhom
