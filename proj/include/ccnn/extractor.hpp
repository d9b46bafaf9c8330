#pragma once

#include <filesystem>
#include <variant>
#include <vector>

#include "ccnn/data_io.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

struct Shape3 {
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  Index size() const { return height * width * channels; }
  bool operator==(const Shape3 &) const = default;
};

/// Valid (unpadded) convolution. Weights are laid out (kh, kw, in, out)
/// row-major, i.e. the HWIO order most training frameworks export.
struct ConvLayer {
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index in_channels = 1;
  Index out_channels = 1;
  Index stride = 1;
  Eigen::VectorXf weights;
  Eigen::VectorXf bias;

  float weight(Index r, Index c, Index in, Index out) const {
    return weights(((r * kernel_w + c) * in_channels + in) * out_channels + out);
  }
};

struct ReluLayer {};

struct MaxPoolLayer {
  Index size = 2;
  Index stride = 2;
};

struct FlattenLayer {};

/// y = W^T x + b with W stored (in, out) row-major.
struct DenseLayer {
  Index in = 1;
  Index out = 1;
  Eigen::VectorXf weights;
  Eigen::VectorXf bias;
};

struct SoftmaxLayer {};

using Layer =
    std::variant<ConvLayer, ReluLayer, MaxPoolLayer, FlattenLayer, DenseLayer, SoftmaxLayer>;

struct WeightBundle {
  Shape3 input;
  std::vector<Layer> layers;

  /// Output shape after each layer. Throws shape-mismatch when consecutive
  /// layers do not compose or a dimension would drop below one, and
  /// non-finite-input on non-finite weights.
  std::vector<Shape3> shapes() const;
};

struct Activation {
  Shape3 shape;
  Vector values; ///< (row, col, channel) row-major
};

/// Runs the first `layer_count` layers.
Activation forward_prefix(const WeightBundle &bundle, const Sample &sample, Index layer_count);

/// Output of the full network (probabilities when the last layer is softmax).
Vector forward(const WeightBundle &bundle, const Sample &sample);

/// Number of leading layers that make up the feature extractor: through the
/// last conv layer plus any relu / max-pool layers directly after it.
Index feature_layer_count(const WeightBundle &bundle);

/// Last-conv-block activations for every sample, labels kept, rounded to
/// float so they survive a FeatureBundle round trip unchanged.
Dataset extract_features(const WeightBundle &bundle, const Dataset &data);

/// Fraction of samples whose argmax output equals the label.
double accuracy(const WeightBundle &bundle, const Dataset &data);

struct PerturbSpec {
  double sigma = 0.5;
  double target_accuracy = 0.15;
  Dataset calibration_data;
  Seed seed = 0;
  Index max_retries = 20;
};

struct PerturbAttempt {
  double sigma = 0;
  double accuracy = 0;
};

struct PerturbResult {
  WeightBundle bundle;
  double sigma = 0;    ///< noise level of the accepted bundle
  double accuracy = 0; ///< its calibration accuracy
  std::vector<PerturbAttempt> attempts;
};

/// Train-and-Perturb: add i.i.d. N(0, sigma^2) noise to every weight and bias;
/// while calibration accuracy exceeds the target, double sigma and redraw
/// (from the original weights), up to max_retries times.
PerturbResult perturb(const WeightBundle &bundle, const PerturbSpec &spec);

// "CCNW" | u32 version=1 | u32 in_h | u32 in_w | u32 in_c | u32 layer_count |
// per layer: u32 tag, then
//   conv(1):    u32 kh, kw, in, out, stride | f32 weights | f32 bias[out]
//   relu(2)
//   maxpool(3): u32 size, stride
//   flatten(4)
//   dense(5):   u32 in, out | f32 weights | f32 bias[out]
//   softmax(6)
// all little-endian.
void save_bundle(const WeightBundle &bundle, const std::filesystem::path &path);
WeightBundle load_bundle(const std::filesystem::path &path);

/// JSON manifest + raw little-endian f32 arrays (paths relative to the
/// manifest), for bundles produced by external training code:
///
///     {"input": [h, w, c],
///      "layers": [{"type": "conv", "kernel": [kh, kw, in, out], "stride": 1,
///                  "weights": "c1_w.f32", "bias": "c1_b.f32"},
///                 {"type": "relu"}, {"type": "maxpool", "size": 2, "stride": 2},
///                 {"type": "flatten"},
///                 {"type": "dense", "in": n, "out": m, "weights": "...", "bias": "..."},
///                 {"type": "softmax"}]}
WeightBundle load_bundle_manifest(const std::filesystem::path &manifest);

/// Loads a .json manifest or a CCNW file, by extension.
WeightBundle load_any_bundle(const std::filesystem::path &path);

} // namespace ccnn
