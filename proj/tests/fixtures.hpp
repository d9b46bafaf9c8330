#pragma once

// Small synthetic networks and image sets shared by the extractor tests and
// the acceptance run.

#include <random>

#include "ccnn/data_io.hpp"
#include "ccnn/extractor.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/trainer.hpp"

namespace fixture {

using namespace ccnn;

inline Eigen::VectorXf normal_floats(std::mt19937_64 &gen, Index n, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXf v(n);
  for (Index i = 0; i < n; ++i)
    v(i) = static_cast<float>(d(gen));
  return v;
}

inline ConvLayer random_conv(std::mt19937_64 &gen, Index k, Index in, Index out, Index stride,
                             double scale = 0.5) {
  return {k, k, in, out, stride, normal_floats(gen, k * k * in * out, scale),
          normal_floats(gen, out, scale)};
}

inline DenseLayer random_dense(std::mt19937_64 &gen, Index in, Index out, double scale = 0.5) {
  return {in, out, normal_floats(gen, in * out, scale), normal_floats(gen, out, scale)};
}

/// d2 = 4; class k puts a bright 3x3 square in quadrant k of an 8x8 image,
/// on top of uniform noise.
inline Dataset quadrant_images(Index n, std::uint64_t seed, double noise = 0.35) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, noise);
  std::uniform_int_distribution<int> jitter(0, 1);
  Dataset d;
  d.num_classes = 4;
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 4);
    Sample s{8, 8, 1, Vector(64), label};
    for (Index k = 0; k < 64; ++k)
      s.pixels(k) = u(gen);
    const Index r0 = (label / 2) * 4 + jitter(gen), c0 = (label % 2) * 4 + jitter(gen);
    for (Index r = r0; r < r0 + 3; ++r)
      for (Index c = c0; c < c0 + 3; ++c)
        s.pixels(r * 8 + c) = std::min(1.0, s.pixels(r * 8 + c) + 0.6);
    d.samples.push_back(std::move(s));
  }
  return d;
}

/// Random conv feature block followed by a dense softmax head whose weights
/// come from a convex CCNN fit on the extracted features (one whole-map patch).
inline WeightBundle trained_bundle(const Dataset &train, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  WeightBundle b;
  b.input = {train.height(), train.width(), train.channels()};
  b.layers = {random_conv(gen, 3, train.channels(), 6, 1), ReluLayer{}, MaxPoolLayer{2, 2}};
  const Dataset feats = extract_features(b, train);
  const Index side = feats.height();
  const PatchedDataset pd = make_patched(feats, {side, 1});
  TrainerConfig cfg;
  cfg.mode = PenalizedMode{1e-3, 0.1};
  cfg.step_size = 0.5;
  cfg.batch_size = pd.size();
  cfg.iterations = 400;
  const CcnnParams params = fit(pd, cfg).params;

  DenseLayer head{pd.patch_dim, train.num_classes, Eigen::VectorXf(pd.patch_dim * train.num_classes),
                  Eigen::VectorXf::Zero(train.num_classes)};
  for (Index r = 0; r < pd.patch_dim; ++r)
    for (Index k = 0; k < train.num_classes; ++k)
      head.weights(r * train.num_classes + k) = static_cast<float>(params.A(r, k));
  b.layers.push_back(FlattenLayer{});
  b.layers.push_back(head);
  b.layers.push_back(SoftmaxLayer{});
  return b;
}

} // namespace fixture
