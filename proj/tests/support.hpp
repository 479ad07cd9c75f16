#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "core/error.hpp"
#include "core/geometry.hpp"

namespace xdhom::testing {

/// Kind of the xdhom::Error thrown by `body`, or nullopt when nothing is thrown.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// P = 1 on (0,1/2), 4 on (1/2,1) along `axis`, other axes 1.
inline LayeredCoefficient two_phase(int axis = 0, int dim = 1) {
  std::vector<double> low(static_cast<std::size_t>(dim), 1.0);
  std::vector<double> high(static_cast<std::size_t>(dim), 1.0);
  low[static_cast<std::size_t>(axis)] = 1.0;
  high[static_cast<std::size_t>(axis)] = 4.0;
  return LayeredCoefficient{axis, {0.5}, {low, high}};
}

inline double harmonic_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += 1.0 / x;
  return static_cast<double>(v.size()) / s;
}

/// Convergence order: minus the least-squares slope of log(err) against log(n).
inline double fitted_order(const std::vector<double>& n, const std::vector<double>& err) {
  const auto m = static_cast<double>(n.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(n[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace xdhom::testing
