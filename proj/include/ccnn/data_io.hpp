#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ccnn/rng.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

/// One image (or feature tensor) with its class label.
///
/// Pixels are stored flat in (row, col, channel) row-major order, so the
/// value at (r, c, ch) lives at `(r * width + c) * channels + ch`.
struct Sample {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  Vector pixels;
  int label = 0;

  double at(Index row, Index col, Index channel) const {
    return pixels((row * width + col) * channels + channel);
  }
};

enum class SourceKind { raw_image, extracted_feature, synthetic };

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;
  SourceKind source = SourceKind::raw_image;

  Index size() const { return static_cast<Index>(samples.size()); }
  bool empty() const { return samples.empty(); }
  Index height() const { return samples.front().height; }
  Index width() const { return samples.front().width; }
  Index channels() const { return samples.front().channels; }

  std::vector<int> labels() const;

  /// Throws unless the dataset is non-empty, shapes agree, and labels are in range.
  void validate() const;
};

/// Subset by index, in the given order. Indices may repeat.
Dataset select(const Dataset &data, const std::vector<Index> &indices);

// IDX (big-endian MNIST layout). Pixels are divided by 255. `num_classes`
// defaults to max label + 1.
Dataset load_idx(const std::filesystem::path &image_path,
                 const std::filesystem::path &label_path,
                 std::optional<int> num_classes = std::nullopt);

/// Inverse of load_idx for single-channel datasets; pixels are rounded to bytes.
void write_idx(const Dataset &data, const std::filesystem::path &image_path,
               const std::filesystem::path &label_path);

// FeatureBundle: "CCNF", u32 version=1, u32 n, h, w, c, d2, n u32 labels,
// n*h*w*c little-endian f32 values.
Dataset load_features(const std::filesystem::path &path);
void write_features(const Dataset &data, const std::filesystem::path &path);

/// `size` indices drawn uniformly with replacement from [0, n).
std::vector<Index> bootstrap_indices(Index n, Index size, Seed seed);

/// Bootstrap resample of `data`; deterministic in (data, size, seed).
Dataset resample(const Dataset &data, Index size, Seed seed);

enum class NoiseKind { logistic, separable_margin };

struct SyntheticSpec {
  Index input_dim = 1;
  Vector true_coefficients;
  NoiseKind noise = NoiseKind::logistic;
  double margin_width = 0.0;
  Seed seed = 0;
};

/// Standard-normal inputs shaped 1 x 1 x input_dim, binary labels.
///
/// Logistic mode draws y ~ Bernoulli(1 / (1 + exp(-<w, x>))). Separable mode
/// sets y = 1 iff <w, x> > 0 and redraws inputs with |<w, x>| < margin_width;
/// it gives up (rejection-exhausted) when fewer than one draw in a thousand is
/// accepted or an individual sample needs more than 10^6 draws.
Dataset generate_synthetic(const SyntheticSpec &spec, Index n);

double logistic(double z);

} // namespace ccnn
