#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hwscene {

enum class ErrorKind {
  parse,
  schema,
  unsupported,
  integrity,
  binding,
  validation,
  degenerate,
  insufficient_views,
  not_converged,
  not_found,
  conflict,
  incompatible,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Error raised by every module. `module()` names the component that
/// produced it so the CLI and the HTTP layer can report a source tag.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

}  // namespace hwscene
