#include "ccnn/error.hpp"

namespace ccnn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::malformed_magic: return "malformed-magic";
  case ErrorKind::count_mismatch: return "count-mismatch";
  case ErrorKind::truncated_file: return "truncated-file";
  case ErrorKind::bad_header: return "bad-header";
  case ErrorKind::shape_mismatch: return "shape-mismatch";
  case ErrorKind::empty_dataset: return "empty-dataset";
  case ErrorKind::misaligned_stride: return "misaligned-stride";
  case ErrorKind::non_finite_input: return "non-finite-input";
  case ErrorKind::nonpositive_mu: return "nonpositive-mu";
  case ErrorKind::nonpositive_radius: return "nonpositive-radius";
  case ErrorKind::bad_label: return "bad-label";
  case ErrorKind::empty_batch: return "empty-batch";
  case ErrorKind::non_finite_objective: return "non-finite-objective";
  case ErrorKind::insufficient_anchors: return "insufficient-anchors";
  case ErrorKind::rank_deficient: return "rank-deficient";
  case ErrorKind::bad_alpha: return "bad-alpha";
  case ErrorKind::size_mismatch: return "size-mismatch";
  case ErrorKind::non_finite_activation: return "non-finite-activation";
  case ErrorKind::no_conv_layer: return "no-conv-layer";
  case ErrorKind::nonpositive_sigma: return "nonpositive-sigma";
  case ErrorKind::calibration_failed: return "calibration-failed";
  case ErrorKind::insufficient_runs: return "insufficient-runs";
  case ErrorKind::rejection_exhausted: return "rejection-exhausted";
  case ErrorKind::invalid_argument: return "invalid-argument";
  case ErrorKind::missing_input: return "missing-input";
  case ErrorKind::invalid_config: return "invalid-config";
  case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

} // namespace ccnn
