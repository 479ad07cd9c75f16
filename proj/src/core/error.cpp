#include "core/error.hpp"

namespace xdhom {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::Geometry: return "geometry error";
    case ErrorKind::Resolution: return "resolution error";
    case ErrorKind::Coefficient: return "coefficient error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Solver: return "solver error";
    case ErrorKind::Step: return "step error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Internal: return "internal error";
  }
  return "unknown error";
}

}  // namespace xdhom
