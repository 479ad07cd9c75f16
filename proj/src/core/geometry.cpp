#include "core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "core/error.hpp"

namespace xdhom {

bool HoleSpec::contains(std::span<const double> y) const {
  if (shape == HoleShape::Box) {
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (std::abs(y[k] - center[k]) >= 0.5 * size[k]) return false;
    }
    return true;
  }
  double r2 = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) r2 += (y[k] - center[k]) * (y[k] - center[k]);
  return r2 < size[0] * size[0];
}

CellGeometry::CellGeometry(int dim, std::vector<double> lengths, std::optional<HoleSpec> hole)
    : dim_(dim), lengths_(std::move(lengths)), hole_(hole) {
  if (dim_ != 1 && dim_ != 2) fail(ErrorKind::Geometry, fmt::format("cell dimension must be 1 or 2, got {}", dim_));
  if (lengths_.size() != static_cast<std::size_t>(dim_))
    fail(ErrorKind::Geometry, fmt::format("expected {} cell lengths, got {}", dim_, lengths_.size()));
  for (double b : lengths_) {
    if (!(b > 0.0) || !std::isfinite(b)) fail(ErrorKind::Geometry, "cell lengths must be positive and finite");
  }
  if (!hole_) return;
  if (dim_ != 2) fail(ErrorKind::Geometry, "a hole requires a 2-D cell");
  const auto& h = *hole_;
  for (int k = 0; k < 2; ++k) {
    const double half = h.shape == HoleShape::Box ? 0.5 * h.size[k] : h.size[0];
    if (!(half > 0.0)) fail(ErrorKind::Geometry, "hole size must be positive");
    if (!(h.center[k] - half > 0.0) || !(h.center[k] + half < lengths_[k]))
      fail(ErrorKind::Geometry, "hole closure must lie strictly inside the cell");
  }
}

CellGeometry CellGeometry::unit(int dim, std::optional<HoleSpec> hole) {
  return CellGeometry(dim, std::vector<double>(static_cast<std::size_t>(dim), 1.0), hole);
}

double CellGeometry::measure() const {
  double m = 1.0;
  for (double b : lengths_) m *= b;
  return m;
}

CellGrid::CellGrid(CellGeometry geometry, int resolution)
    : geometry_(std::move(geometry)), resolution_(resolution) {
  if (resolution_ < 4) fail(ErrorKind::Resolution, fmt::format("cell resolution must be >= 4, got {}", resolution_));
  count_ = dim() == 1 ? static_cast<std::size_t>(resolution_)
                      : static_cast<std::size_t>(resolution_) * static_cast<std::size_t>(resolution_);
  mask_.assign(count_, 1);
  if (const auto& hole = geometry_.hole()) {
    std::size_t masked = 0;
    for (std::size_t e = 0; e < count_; ++e) {
      const auto c = element_center(e);
      if (hole->contains(std::span<const double>(c.data(), 2))) {
        mask_[e] = 0;
        ++masked;
      }
    }
    if (masked == 0) fail(ErrorKind::Resolution, "resolution too coarse: the hole covers no element center");
  }
  fluid_elements_ = static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));

  active_.assign(count_, 0);
  for (std::size_t e = 0; e < count_; ++e) {
    if (!mask_[e]) continue;
    const auto nodes = element_nodes(e);
    for (int a = 0; a < nodes_per_element(); ++a) active_[nodes[static_cast<std::size_t>(a)]] = 1;
  }
}

double CellGrid::spacing(int axis) const { return geometry_.length(axis) / resolution_; }

double CellGrid::element_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= spacing(k);
  return v;
}

std::array<int, 2> CellGrid::multi_index(std::size_t linear) const {
  const auto n = static_cast<std::size_t>(resolution_);
  return {static_cast<int>(linear % n), static_cast<int>(linear / n)};
}

std::size_t CellGrid::linear_index(int i, int j) const {
  const int n = resolution_;
  i = ((i % n) + n) % n;
  j = dim() == 1 ? 0 : ((j % n) + n) % n;
  return static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
}

std::array<double, 2> CellGrid::element_center(std::size_t e) const {
  const auto [i, j] = multi_index(e);
  std::array<double, 2> c{(i + 0.5) * spacing(0), 0.0};
  if (dim() == 2) c[1] = (j + 0.5) * spacing(1);
  return c;
}

std::array<double, 2> CellGrid::node_coordinate(std::size_t node) const {
  const auto [i, j] = multi_index(node);
  std::array<double, 2> c{i * spacing(0), 0.0};
  if (dim() == 2) c[1] = j * spacing(1);
  return c;
}

std::array<std::size_t, 4> CellGrid::element_nodes(std::size_t e) const {
  const auto [i, j] = multi_index(e);
  if (dim() == 1) return {linear_index(i), linear_index(i + 1), 0, 0};
  return {linear_index(i, j), linear_index(i + 1, j), linear_index(i, j + 1), linear_index(i + 1, j + 1)};
}

double CellGrid::fluid_measure() const {
  return static_cast<double>(fluid_elements_) * element_volume();
}

std::string CellGrid::id() const {
  std::string s = fmt::format("d={};N={};b=", dim(), resolution_);
  for (int k = 0; k < dim(); ++k) s += fmt::format("{}{:.17g}", k ? "," : "", geometry_.length(k));
  if (const auto& h = geometry_.hole()) {
    s += fmt::format(";hole={}({:.17g},{:.17g};{:.17g},{:.17g})",
                     h->shape == HoleShape::Box ? "box" : "ball", h->center[0], h->center[1],
                     h->size[0], h->size[1]);
  }
  return s;
}

CellGrid build_cell_grid(const CellGeometry& geometry, int resolution) {
  return CellGrid(geometry, resolution);
}

namespace {

std::vector<double> broadcast(const std::vector<double>& v, int dim, const char* what) {
  if (v.size() == 1) return std::vector<double>(static_cast<std::size_t>(dim), v[0]);
  if (v.size() != static_cast<std::size_t>(dim))
    fail(ErrorKind::Coefficient, fmt::format("{}: expected 1 or {} values, got {}", what, dim, v.size()));
  return v;
}

}  // namespace

CoefficientSpec sinusoid_coefficient(std::vector<double> mean, std::vector<double> amplitude,
                                     std::vector<int> axis, std::vector<double> lengths) {
  if (mean.size() != amplitude.size() || mean.size() != axis.size())
    fail(ErrorKind::Coefficient, "sinusoid: mean, amplitude and axis must have equal length");
  std::string label = "sinusoid(";
  for (std::size_t k = 0; k < mean.size(); ++k) {
    if (axis[k] < 0 || static_cast<std::size_t>(axis[k]) >= lengths.size())
      fail(ErrorKind::Coefficient, "sinusoid: axis out of range");
    label += fmt::format("{}{:.17g}+{:.17g}*sin(2pi*y{}/{:.17g})", k ? ";" : "", mean[k], amplitude[k],
                         axis[k] + 1, lengths[static_cast<std::size_t>(axis[k])]);
  }
  label += ")";
  ExpressionCoefficient expr;
  expr.label = label;
  expr.fn = [mean, amplitude, axis, lengths](std::span<const double> y) {
    std::vector<double> out(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k) {
      const auto a = static_cast<std::size_t>(axis[k]);
      out[k] = mean[k] + amplitude[k] * std::sin(2.0 * std::numbers::pi * y[a] / lengths[a]);
    }
    return out;
  };
  return expr;
}

std::vector<double> evaluate_coefficient(const CoefficientSpec& spec, std::span<const double> y, int dim) {
  struct Visitor {
    std::span<const double> y;
    int dim;
    std::vector<double> operator()(const ConstantCoefficient& c) const {
      return broadcast(c.values, dim, "constant coefficient");
    }
    std::vector<double> operator()(const LayeredCoefficient& c) const {
      if (c.axis < 0 || c.axis >= dim) fail(ErrorKind::Coefficient, "layered coefficient: axis out of range");
      if (c.values.size() != c.breaks.size() + 1)
        fail(ErrorKind::Coefficient, "layered coefficient: need one value set per layer");
      const double t = y[static_cast<std::size_t>(c.axis)];
      std::size_t layer = 0;
      while (layer < c.breaks.size() && t >= c.breaks[layer]) ++layer;
      return broadcast(c.values[layer], dim, "layered coefficient");
    }
    std::vector<double> operator()(const InclusionCoefficient& c) const {
      if (c.lo.size() != static_cast<std::size_t>(dim) || c.hi.size() != static_cast<std::size_t>(dim))
        fail(ErrorKind::Coefficient, "inclusion coefficient: lo/hi must have one entry per axis");
      bool inside = true;
      for (int k = 0; k < dim; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        inside = inside && y[ku] >= c.lo[ku] && y[ku] < c.hi[ku];
      }
      return broadcast(inside ? c.inside : c.outside, dim, "inclusion coefficient");
    }
    std::vector<double> operator()(const ExpressionCoefficient& c) const {
      if (!c.fn) fail(ErrorKind::Coefficient, "expression coefficient has no function");
      return broadcast(c.fn(y), dim, "expression coefficient");
    }
  };
  return std::visit(Visitor{y, dim}, spec);
}

std::string describe(const CoefficientSpec& spec) {
  struct Visitor {
    static std::string list(const std::vector<double>& v) {
      std::string s = "[";
      for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:.17g}", i ? "," : "", v[i]);
      return s + "]";
    }
    std::string operator()(const ConstantCoefficient& c) const { return "constant" + list(c.values); }
    std::string operator()(const LayeredCoefficient& c) const {
      std::string s = fmt::format("layers(axis={};breaks={};values=", c.axis, list(c.breaks));
      for (const auto& v : c.values) s += list(v);
      return s + ")";
    }
    std::string operator()(const InclusionCoefficient& c) const {
      return "inclusion(" + list(c.lo) + list(c.hi) + list(c.inside) + list(c.outside) + ")";
    }
    std::string operator()(const ExpressionCoefficient& c) const { return c.label; }
  };
  return std::visit(Visitor{}, spec);
}

PeriodicCoefficient::PeriodicCoefficient(int dim, std::size_t elements, std::vector<double> values,
                                         std::string label)
    : dim_(dim), elements_(elements), values_(std::move(values)), label_(std::move(label)) {
  if (values_.size() != static_cast<std::size_t>(dim_) * elements_)
    fail(ErrorKind::Internal, "coefficient sample count mismatch");
  lower_bound_ = *std::min_element(values_.begin(), values_.end());
  upper_bound_ = *std::max_element(values_.begin(), values_.end());
  for (double v : values_) {
    if (!std::isfinite(v)) fail(ErrorKind::Coefficient, "coefficient sample is not finite");
  }
  if (!(lower_bound_ > 0.0))
    fail(ErrorKind::Coefficient, fmt::format("coefficient must be positive, minimum sample is {}", lower_bound_));
}

PeriodicCoefficient sample_coefficient(const CoefficientSpec& spec, const CellGrid& grid) {
  const int d = grid.dim();
  const std::size_t ne = grid.element_count();
  std::vector<double> values(static_cast<std::size_t>(d) * ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto c = grid.element_center(e);
    const auto p = evaluate_coefficient(spec, std::span<const double>(c.data(), static_cast<std::size_t>(d)), d);
    for (int k = 0; k < d; ++k) values[static_cast<std::size_t>(k) * ne + e] = p[static_cast<std::size_t>(k)];
  }
  return PeriodicCoefficient(d, ne, std::move(values), describe(spec));
}

}  // namespace xdhom
