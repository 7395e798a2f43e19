#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace predmetric {

enum class ErrorKind {
  Domain,
  NonSPD,
  Step,
  ChartMismatch,
  Integration,
  Spec,
  Range,
  NonPositiveRatio,
  Window,
  Truncation,
  DivergentIntegral,
  Config,
  Internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; `kind()` distinguishes the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace predmetric
