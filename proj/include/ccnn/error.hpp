#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccnn {

enum class ErrorKind {
  malformed_magic,
  count_mismatch,
  truncated_file,
  bad_header,
  shape_mismatch,
  empty_dataset,
  misaligned_stride,
  non_finite_input,
  nonpositive_mu,
  nonpositive_radius,
  bad_label,
  empty_batch,
  non_finite_objective,
  insufficient_anchors,
  rank_deficient,
  bad_alpha,
  size_mismatch,
  non_finite_activation,
  no_conv_layer,
  nonpositive_sigma,
  calibration_failed,
  insufficient_runs,
  rejection_exhausted,
  invalid_argument,
  missing_input,
  invalid_config,
  io_error,
};

/// Kebab-case name used in error JSON and messages, e.g. "malformed-magic".
std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string &message) {
  if (!condition)
    throw Error(kind, message);
}

} // namespace ccnn
