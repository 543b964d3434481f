#include "lenssim/error.hpp"

namespace lenssim {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::unsupported_version: return "unsupported_version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::dimension_overflow: return "dimension_overflow";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::build: return "build";
  }
  return "unknown";
}

}  // namespace lenssim
