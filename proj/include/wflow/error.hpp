// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wflow {

enum class ErrorKind {
  invalid_index,
  domain,
  evaluation,
  parameter,
  size,
  tolerance,
  stiffness,
  configuration,
  insufficient_samples,
  normalization,
  shape,
  degenerate_distribution,
  budget,
  oracle,
  usage,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_index: return "invalid-index error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::evaluation: return "evaluation error";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::size: return "size error";
    case ErrorKind::tolerance: return "tolerance error";
    case ErrorKind::stiffness: return "stiffness error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::insufficient_samples: return "insufficient-samples error";
    case ErrorKind::normalization: return "normalization error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::degenerate_distribution: return "degenerate-distribution error";
    case ErrorKind::budget: return "budget error";
    case ErrorKind::oracle: return "oracle error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::io: return "io error";
  }
  return "error";
}

}  // namespace wflow
