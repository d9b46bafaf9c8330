#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "ccnn/error.hpp"
#include "ccnn/extractor.hpp"
#include "ccnn/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ccnn;

namespace {

ErrorKind kind_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io_error;
}

WeightBundle two_conv_bundle(std::mt19937_64 &gen) {
  WeightBundle b;
  b.input = {9, 9, 2};
  b.layers = {fixture::random_conv(gen, 3, 2, 4, 1), ReluLayer{}, fixture::random_conv(gen, 3, 4, 3, 2),
              ReluLayer{}, MaxPoolLayer{2, 1}, FlattenLayer{}, fixture::random_dense(gen, 12, 5),
              SoftmaxLayer{}};
  return b;
}

void write_floats(const std::filesystem::path &p, const Eigen::VectorXf &v) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(4 * v.size()));
}

} // namespace

TEST_CASE("zero weights give a uniform softmax") {
  WeightBundle b;
  b.input = {5, 5, 1};
  b.layers = {ConvLayer{2, 2, 1, 3, 1, Eigen::VectorXf::Zero(12), Eigen::VectorXf::Zero(3)},
              FlattenLayer{}, DenseLayer{48, 10, Eigen::VectorXf::Zero(480), Eigen::VectorXf::Zero(10)},
              SoftmaxLayer{}};
  std::mt19937_64 gen(1);
  const Vector p = forward(b, oracle::random_sample(gen, 5, 1));
  REQUIRE(p.size() == 10);
  CHECK((p.array() - 0.1).abs().maxCoeff() < 1e-15);
}

TEST_CASE("1x1 identity convolution passes the input through") {
  WeightBundle b;
  b.input = {4, 4, 1};
  b.layers = {ConvLayer{1, 1, 1, 1, 1, Eigen::VectorXf::Ones(1), Eigen::VectorXf::Zero(1)}};
  std::mt19937_64 gen(2);
  const Sample s = oracle::random_sample(gen, 4, 1);
  CHECK(forward(b, s) == s.pixels);

  b.layers.push_back(ReluLayer{});
  Dataset d;
  d.num_classes = 2;
  Sample signed_sample = s;
  signed_sample.pixels.array() -= 0.5;
  d.samples = {signed_sample};
  const Dataset f = extract_features(b, d);
  CHECK(f.source == SourceKind::extracted_feature);
  CHECK(f.height() == 4);
  const Vector expected = signed_sample.pixels.cwiseMax(0.0).cast<float>().cast<double>();
  CHECK(f.samples[0].pixels == expected);
}

TEST_CASE("forward matches the nested-loop oracle") {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 10; ++t) {
    const WeightBundle b = two_conv_bundle(gen);
    const Sample s = oracle::random_sample(gen, 9, 2);
    const Vector got = forward(b, s);
    const auto expected = oracle::forward_loops(b, s);
    REQUIRE(got.size() == static_cast<Index>(expected.size()));
    for (Index k = 0; k < got.size(); ++k)
      CHECK(std::abs(got(k) - expected[static_cast<std::size_t>(k)]) < 1e-10);
    CHECK(std::abs(got.sum() - 1) < 1e-12);
  }
}

TEST_CASE("shape algebra") {
  std::mt19937_64 gen(4);
  const WeightBundle b = two_conv_bundle(gen);
  const auto shapes = b.shapes();
  CHECK(shapes[0] == Shape3{7, 7, 4});
  CHECK(shapes[2] == Shape3{3, 3, 3});
  CHECK(shapes[4] == Shape3{2, 2, 3});
  CHECK(shapes[5] == Shape3{1, 1, 12});
  CHECK(feature_layer_count(b) == 5);

  WeightBundle bad = b;
  bad.layers[2] = fixture::random_conv(gen, 3, 3, 3, 1);
  CHECK(kind_of([&] { bad.shapes(); }) == ErrorKind::shape_mismatch);
  bad = b;
  bad.layers.insert(bad.layers.begin() + 4, MaxPoolLayer{5, 1});
  CHECK(kind_of([&] { bad.shapes(); }) == ErrorKind::shape_mismatch);
  bad = b;
  std::get<ConvLayer>(bad.layers[0]).weights(0) = std::numeric_limits<float>::infinity();
  CHECK(kind_of([&] { bad.shapes(); }) == ErrorKind::non_finite_input);

  Dataset d;
  d.num_classes = 5;
  d.samples = {oracle::random_sample(gen, 9, 2)};
  const Dataset f = extract_features(b, d);
  CHECK(f.height() == 2);
  CHECK(f.channels() == 3);

  Sample wrong = oracle::random_sample(gen, 8, 2);
  CHECK(kind_of([&] { forward(b, wrong); }) == ErrorKind::shape_mismatch);
  Sample nan = oracle::random_sample(gen, 9, 2);
  nan.pixels(3) = std::nan("");
  CHECK(kind_of([&] { forward(b, nan); }) == ErrorKind::non_finite_activation);

  WeightBundle dense_only;
  dense_only.input = {2, 2, 1};
  dense_only.layers = {FlattenLayer{}, fixture::random_dense(gen, 4, 2), SoftmaxLayer{}};
  CHECK(kind_of([&] { feature_layer_count(dense_only); }) == ErrorKind::no_conv_layer);
}

TEST_CASE("exported features train to the same objective") {
  oracle::TempDir dir;
  std::mt19937_64 gen(5);
  const Dataset images = fixture::quadrant_images(40, 6);
  WeightBundle b;
  b.input = {8, 8, 1};
  b.layers = {fixture::random_conv(gen, 3, 1, 4, 1), ReluLayer{}, MaxPoolLayer{2, 2}};
  const Dataset feats = extract_features(b, images);
  write_features(feats, dir / "f.ccnf");
  const Dataset back = load_features(dir / "f.ccnf");
  for (Index i = 0; i < feats.size(); ++i)
    CHECK(back.samples[i].pixels == feats.samples[i].pixels);

  TrainerConfig cfg;
  cfg.mode = ConstrainedMode{5.0};
  cfg.step_size = 0.2;
  cfg.batch_size = 8;
  cfg.iterations = 5;
  const double in_memory = fit(make_patched(feats, {1, 1}), cfg).final_objective;
  const double reloaded = fit(make_patched(back, {1, 1}), cfg).final_objective;
  CHECK(std::abs(in_memory - reloaded) <= 1e-9);
}

TEST_CASE("perturb") {
  const Dataset calib = fixture::quadrant_images(200, 7);
  const WeightBundle trained = fixture::trained_bundle(fixture::quadrant_images(200, 8), 9);
  const double base_acc = accuracy(trained, calib);
  CHECK(base_acc >= 0.6);

  PerturbSpec spec;
  spec.sigma = 0.05;
  spec.target_accuracy = 1.0 / 4 + 0.05;
  spec.calibration_data = calib;
  spec.seed = 10;
  const PerturbResult r = perturb(trained, spec);
  CHECK(r.accuracy <= spec.target_accuracy);
  CHECK(accuracy(r.bundle, calib) == r.accuracy);
  CHECK(r.attempts.back().sigma == r.sigma);
  for (std::size_t a = 1; a < r.attempts.size(); ++a)
    CHECK(r.attempts[a].sigma == 2 * r.attempts[a - 1].sigma);

  for (std::size_t l = 0; l < trained.layers.size(); ++l) {
    if (const auto *c = std::get_if<ConvLayer>(&trained.layers[l])) {
      const auto &n = std::get<ConvLayer>(r.bundle.layers[l]);
      CHECK((n.weights.array() != c->weights.array()).all());
      CHECK((n.bias.array() != c->bias.array()).all());
    } else if (const auto *d = std::get_if<DenseLayer>(&trained.layers[l])) {
      const auto &n = std::get<DenseLayer>(r.bundle.layers[l]);
      CHECK((n.weights.array() != d->weights.array()).all());
    }
  }
  const Dataset f0 = extract_features(trained, calib), f1 = extract_features(r.bundle, calib);
  for (Index i = 0; i < calib.size(); ++i)
    CHECK((f0.samples[i].pixels - f1.samples[i].pixels).cwiseAbs().maxCoeff() > 0);

  CHECK(perturb(trained, spec).bundle.layers.size() == trained.layers.size());
  const PerturbResult again = perturb(trained, spec);
  CHECK(again.sigma == r.sigma);
  CHECK(again.accuracy == r.accuracy);

  PerturbSpec zero = spec;
  zero.sigma = 0;
  CHECK(kind_of([&] { perturb(trained, zero); }) == ErrorKind::nonpositive_sigma);
  PerturbSpec hopeless = spec;
  hopeless.target_accuracy = 1e-9;
  hopeless.max_retries = 2;
  CHECK(kind_of([&] { perturb(trained, hopeless); }) == ErrorKind::calibration_failed);
}

TEST_CASE("bundle files") {
  oracle::TempDir dir;
  std::mt19937_64 gen(11);
  const WeightBundle b = two_conv_bundle(gen);
  save_bundle(b, dir / "b.ccnw");
  const WeightBundle back = load_any_bundle(dir / "b.ccnw");
  REQUIRE(back.layers.size() == b.layers.size());
  CHECK(back.input == b.input);
  const Sample s = oracle::random_sample(gen, 9, 2);
  CHECK(forward(back, s) == forward(b, s));

  // Same network through the JSON manifest path.
  const auto &c1 = std::get<ConvLayer>(b.layers[0]);
  const auto &c2 = std::get<ConvLayer>(b.layers[2]);
  const auto &d = std::get<DenseLayer>(b.layers[6]);
  write_floats(dir / "c1w.f32", c1.weights);
  write_floats(dir / "c1b.f32", c1.bias);
  write_floats(dir / "c2w.f32", c2.weights);
  write_floats(dir / "c2b.f32", c2.bias);
  write_floats(dir / "dw.f32", d.weights);
  write_floats(dir / "db.f32", d.bias);
  std::ofstream(dir / "net.json") << R"({"input": [9, 9, 2], "layers": [
    {"type": "conv", "kernel": [3, 3, 2, 4], "stride": 1, "weights": "c1w.f32", "bias": "c1b.f32"},
    {"type": "relu"},
    {"type": "conv", "kernel": [3, 3, 4, 3], "stride": 2, "weights": "c2w.f32", "bias": "c2b.f32"},
    {"type": "relu"},
    {"type": "maxpool", "size": 2, "stride": 1},
    {"type": "flatten"},
    {"type": "dense", "in": 12, "out": 5, "weights": "dw.f32", "bias": "db.f32"},
    {"type": "softmax"}]})";
  const WeightBundle manifest = load_any_bundle(dir / "net.json");
  CHECK(forward(manifest, s) == forward(b, s));

  std::ofstream(dir / "bad.json") << R"({"input": [9, 9, 2], "layers": [{"type": "lstm"}]})";
  CHECK(kind_of([&] { load_bundle_manifest(dir / "bad.json"); }) == ErrorKind::bad_header);
  CHECK(kind_of([&] { load_bundle(dir / "c1w.f32"); }) == ErrorKind::malformed_magic);
}
