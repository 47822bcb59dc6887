#include "hwscene/error.hpp"

namespace hwscene {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::binding: return "binding";
    case ErrorKind::validation: return "validation";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::insufficient_views: return "insufficient_views";
    case ErrorKind::not_converged: return "not_converged";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::incompatible: return "incompatible";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace hwscene
