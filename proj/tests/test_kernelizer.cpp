#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ccnn/error.hpp"
#include "ccnn/kernelizer.hpp"
#include "ccnn/trainer.hpp"
#include "oracles.hpp"

using namespace ccnn;

namespace {

RowMatrix random_pool(std::mt19937_64 &gen, Index n, Index dim) {
  return oracle::random_matrix(gen, n, dim);
}

double exact_kernel(const RowMatrix &a, Index i, const RowMatrix &b, Index j, double gamma) {
  double d2 = 0;
  for (Index k = 0; k < a.cols(); ++k)
    d2 += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
  return std::exp(-gamma * d2);
}

Dataset image_set(std::mt19937_64 &gen, Index n, Index side, Index channels) {
  Dataset d;
  d.num_classes = 2;
  for (Index i = 0; i < n; ++i)
    d.samples.push_back(oracle::random_sample(gen, side, channels, static_cast<int>(i % 2)));
  return d;
}

} // namespace

TEST_CASE("single anchor reduces to a normalized kernel column") {
  std::mt19937_64 gen(1);
  const RowMatrix pool = random_pool(gen, 10, 3);
  const KernelFeatureMap map = build_feature_map(pool, 0.7, 1, 5);
  REQUIRE(map.feature_dim() == 1);
  for (int t = 0; t < 5; ++t) {
    const Vector z = oracle::random_matrix(gen, 3, 1);
    const double expected = std::exp(-0.7 * (z - map.anchors.row(0).transpose()).squaredNorm());
    CHECK(std::abs(std::abs(map.features(z)(0)) - expected) < 1e-14);
  }
}

TEST_CASE("features are exact on the anchors") {
  std::mt19937_64 gen(2);
  const RowMatrix pool = random_pool(gen, 80, 4);
  const KernelFeatureMap map = build_feature_map(pool, 0.5, 20, 9);
  CHECK(map.feature_dim() <= 20);
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < 20; ++j) {
      const double ip = map.features(map.anchors.row(i).transpose())
                            .dot(map.features(map.anchors.row(j).transpose()));
      CHECK(std::abs(ip - exact_kernel(map.anchors, i, map.anchors, j, 0.5)) < 1e-6);
    }
  // Anchors are distinct rows of the pool.
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < i; ++j)
      CHECK(map.anchors.row(i) != map.anchors.row(j));
}

TEST_CASE("full Nystrom reproduces the exact Gram matrix") {
  std::mt19937_64 gen(3);
  const RowMatrix pool = random_pool(gen, 50, 4);
  const KernelFeatureMap map = build_feature_map(pool, 0.5, 50, 4);
  double worst = 0;
  for (Index i = 0; i < 50; ++i)
    for (Index j = 0; j < 50; ++j) {
      const double ip = map.features(pool.row(i).transpose()).dot(map.features(pool.row(j).transpose()));
      worst = std::max(worst, std::abs(ip - exact_kernel(pool, i, pool, j, 0.5)));
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("vanishing bandwidth collapses the features") {
  std::mt19937_64 gen(4);
  const RowMatrix pool = random_pool(gen, 30, 3);
  const KernelFeatureMap map = build_feature_map(pool, 1e-8, 6, 2);
  for (int t = 0; t < 10; ++t) {
    const Vector u = oracle::random_matrix(gen, 3, 1), v = oracle::random_matrix(gen, 3, 1);
    CHECK((map.features(u) - map.features(v)).norm() < 1e-3);
  }
}

TEST_CASE("featurize paths agree and keep the layout") {
  std::mt19937_64 gen(5);
  const Dataset d = image_set(gen, 6, 6, 2);
  const PatchConfig pc{2, 2};
  const KernelFeatureMap map = build_feature_map(d, pc, {0.8, 12, std::nullopt, 1e-10}, 7);
  const PatchedDataset raw = make_patched(d, pc);
  const PatchedDataset feat = featurize(map, raw);
  CHECK(feat.patch_count == raw.patch_count);
  CHECK(feat.patch_dim == map.feature_dim());
  CHECK(feat.labels == raw.labels);
  for (Index i = 0; i < raw.size(); ++i) {
    const PatchMatrix one = featurize(map, raw.patches(i));
    CHECK((feat.patches(i).rows - one.rows).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Anchors featurize to rows of the anchor factorization: their inner
  // products with any other anchor reproduce the Gram entries.
  PatchMatrix anchors{map.anchors, -1};
  const PatchMatrix fa = featurize(map, anchors);
  const Matrix gram = fa.rows * fa.rows.transpose();
  for (Index i = 0; i < map.anchor_count(); ++i)
    for (Index j = 0; j < map.anchor_count(); ++j)
      CHECK(std::abs(gram(i, j) - exact_kernel(map.anchors, i, map.anchors, j, 0.8)) < 1e-6);

  CHECK_THROWS_AS(featurize(map, PatchMatrix{RowMatrix::Zero(2, 3), -1}), Error);
}

TEST_CASE("secondary dataset supplies the anchors") {
  std::mt19937_64 gen(6);
  const Dataset train = image_set(gen, 10, 4, 1);
  const Dataset other = image_set(gen, 10, 4, 1);
  const PatchConfig pc{2, 2};
  const KernelFeatureMap map = build_feature_map(train, pc, {1.0, 16, other, 1e-10}, 3);
  const RowMatrix train_patches = patch_pool(train, pc);
  const RowMatrix other_patches = patch_pool(other, pc);
  for (Index a = 0; a < map.anchor_count(); ++a) {
    for (Index r = 0; r < train_patches.rows(); ++r)
      CHECK(map.anchors.row(a) != train_patches.row(r));
    bool found = false;
    for (Index r = 0; r < other_patches.rows(); ++r)
      found = found || map.anchors.row(a) == other_patches.row(r);
    CHECK(found);
  }
}

TEST_CASE("approximation error shrinks with more anchors") {
  std::mt19937_64 gen(7);
  const RowMatrix pool = random_pool(gen, 400, 3);
  std::vector<std::pair<Index, Index>> pairs;
  for (int t = 0; t < 300; ++t)
    pairs.emplace_back(static_cast<Index>(gen() % 400), static_cast<Index>(gen() % 400));
  double previous = 1e300;
  for (Index m : {8, 32, 128}) {
    const KernelFeatureMap map = build_feature_map(pool, 0.5, m, 11);
    CHECK(map.feature_dim() <= m);
    std::vector<double> errors;
    for (auto [i, j] : pairs)
      errors.push_back(std::abs(map.features(pool.row(i).transpose())
                                    .dot(map.features(pool.row(j).transpose())) -
                                exact_kernel(pool, i, pool, j, 0.5)));
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    const double median = errors[errors.size() / 2];
    CHECK(median < previous);
    previous = median;
  }
}

TEST_CASE("RBF features make XOR separable") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> noise(0.0, 0.15);
  std::vector<PatchMatrix> patches;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int a = static_cast<int>(gen() % 2), b = static_cast<int>(gen() % 2);
    RowMatrix z(1, 2);
    z << (2 * a - 1) + noise(gen), (2 * b - 1) + noise(gen);
    patches.push_back({z, i});
    labels.push_back(a ^ b);
  }
  const PatchedDataset raw = make_patched(patches, labels, 2);
  TrainerConfig cfg;
  cfg.mode = ConstrainedMode{1000.0};
  cfg.step_size = 1.0;
  cfg.batch_size = 200;
  cfg.iterations = 2000;
  const double linear = fit(raw, cfg).final_objective;
  CHECK(linear > 0.5);

  RowMatrix pool(200, 2);
  for (Index i = 0; i < 200; ++i)
    pool.row(i) = patches[i].rows.row(0);
  const KernelFeatureMap map = build_feature_map(pool, 1.0, 40, 1);
  const double kernel = fit(featurize(map, raw), cfg).final_objective;
  CHECK(kernel < 0.1);
}

TEST_CASE("kernelizer errors and persistence") {
  std::mt19937_64 gen(9);
  const RowMatrix pool = random_pool(gen, 5, 2);
  try {
    build_feature_map(pool, 1.0, 6, 1);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::insufficient_anchors);
  }
  try {
    build_feature_map(pool, 1.0, 3, 1, 2.0);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::rank_deficient);
  }
  oracle::TempDir dir;
  const KernelFeatureMap map = build_feature_map(pool, 0.3, 4, 2);
  save_feature_map(map, dir / "k.ccnk");
  const KernelFeatureMap back = load_feature_map(dir / "k.ccnk");
  CHECK(back.gamma == map.gamma);
  CHECK(back.anchors == map.anchors);
  CHECK(back.transform == map.transform);
}
