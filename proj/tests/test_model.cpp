#include <doctest.h>

#include <cmath>
#include <random>

#include "ccnn/error.hpp"
#include "ccnn/model.hpp"
#include "oracles.hpp"

using namespace ccnn;

namespace {

PatchMatrix random_patches(std::mt19937_64 &gen, Index p, Index q) {
  return {oracle::random_matrix(gen, p, q), -1};
}

CcnnParams random_params(std::mt19937_64 &gen, Index q, Index p, int d2, double scale = 1.0) {
  CcnnParams params = CcnnParams::zeros(q, p, d2);
  params.A = oracle::random_matrix(gen, q, p * d2) * scale;
  return params;
}

double batch_loss(const CcnnParams &params, const std::vector<LabeledPatches> &batch) {
  double total = 0;
  for (const auto &item : batch)
    total += oracle::log_loss_direct(oracle::score_loops(params, item.patches), item.label);
  return total / static_cast<double>(batch.size());
}

} // namespace

TEST_CASE("score") {
  std::mt19937_64 gen(1);
  const PatchMatrix z = random_patches(gen, 4, 6);
  CHECK(score(CcnnParams::zeros(6, 4, 3), z) == Vector::Zero(3));

  CcnnParams one = CcnnParams::zeros(2, 1, 1);
  one.A << 1, 2;
  PatchMatrix z1{RowMatrix(1, 2), -1};
  z1.rows << 1, 2;
  CHECK(score(one, z1)(0) == 5.0);

  for (int t = 0; t < 10; ++t) {
    const CcnnParams params = random_params(gen, 6, 4, 3);
    const PatchMatrix zt = random_patches(gen, 4, 6);
    CHECK((score(params, zt) - oracle::score_loops(params, zt)).cwiseAbs().maxCoeff() < 1e-12);
  }

  CHECK_THROWS_AS(score(CcnnParams::zeros(5, 4, 3), z), Error);
}

TEST_CASE("score is linear in A") {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 20; ++t) {
    const CcnnParams a = random_params(gen, 5, 3, 2), b = random_params(gen, 5, 3, 2);
    const PatchMatrix z = random_patches(gen, 3, 5);
    const double alpha = 0.3 * t - 2, beta = 1.5 - 0.1 * t;
    CcnnParams combo = a;
    combo.A = alpha * a.A + beta * b.A;
    CHECK((score(combo, z) - (alpha * score(a, z) + beta * score(b, z))).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("batch scores agree with per-sample scores") {
  std::mt19937_64 gen(3);
  std::vector<PatchMatrix> patches;
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) {
    patches.push_back(random_patches(gen, 4, 3));
    labels.push_back(i % 3);
  }
  const PatchedDataset data = make_patched(patches, labels, 3);
  const CcnnParams params = random_params(gen, 3, 4, 3);
  const Matrix s = scores(params, data);
  for (Index i = 0; i < 7; ++i)
    CHECK((s.row(i).transpose() - oracle::score_loops(params, patches[i])).norm() < 1e-12);
}

TEST_CASE("softmax_probs") {
  const Vector u = softmax_probs(Vector::Zero(10));
  CHECK((u.array() - 0.1).abs().maxCoeff() < 1e-15);
  Vector l(2);
  l << std::log(3.0), 0;
  const Vector p = softmax_probs(l);
  CHECK(p(0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(0.25).epsilon(1e-14));
  l << 1000, 0;
  const Vector big = softmax_probs(l);
  CHECK(big.allFinite());
  CHECK(big(0) == 1.0);
  CHECK(big(1) == doctest::Approx(0.0));
  std::mt19937_64 gen(4);
  for (int t = 0; t < 20; ++t) {
    const Vector r = oracle::random_matrix(gen, 5, 1) * 30;
    const Vector pr = softmax_probs(r);
    CHECK(std::abs(pr.sum() - 1) < 1e-12);
    CHECK(pr.minCoeff() >= 0);
  }
}

TEST_CASE("log_loss") {
  CHECK(log_loss(Vector::Zero(2), 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(log_loss(Vector::Zero(7), 3) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  for (double f : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    Vector s(2);
    s << 0, f; // class 1 has logit f relative to class 0
    const double p = 1 / (1 + std::exp(-f));
    for (int y : {0, 1}) {
      const double direct = -std::log(p) * y - std::log(1 - p) * (1 - y);
      CHECK(std::abs(log_loss(s, y) - direct) < 1e-12);
    }
  }
  Vector sat = Vector::Zero(4);
  sat(2) = 50;
  CHECK(log_loss(sat, 2) < 1e-20);
  CHECK(log_loss(sat, 2) >= 0);
  CHECK_THROWS_AS(log_loss(sat, 4), Error);
  CHECK_THROWS_AS(log_loss(sat, -1), Error);
}

TEST_CASE("data_gradient") {
  std::mt19937_64 gen(5);
  SUBCASE("zero A, one sample, two classes") {
    const PatchMatrix z = random_patches(gen, 3, 4);
    const CcnnParams params = CcnnParams::zeros(4, 3, 2);
    const Matrix g = data_gradient(params, {{z, 1}});
    for (Index p = 0; p < 3; ++p) {
      CHECK((g.col(1 * 3 + p) + 0.5 * z.rows.row(p).transpose()).norm() < 1e-15);
      CHECK((g.col(0 * 3 + p) - 0.5 * z.rows.row(p).transpose()).norm() < 1e-15);
    }
  }
  SUBCASE("finite differences") {
    for (int t = 0; t < 100; ++t) {
      const CcnnParams params = random_params(gen, 4, 3, 3, 0.3);
      std::vector<LabeledPatches> batch;
      for (int i = 0; i < 5; ++i)
        batch.push_back({random_patches(gen, 3, 4), static_cast<int>(gen() % 3)});
      const Matrix dir = oracle::random_matrix(gen, 4, 9);
      const double h = 1e-6;
      CcnnParams plus = params, minus = params;
      plus.A += h * dir;
      minus.A -= h * dir;
      const double fd = (batch_loss(plus, batch) - batch_loss(minus, batch)) / (2 * h);
      const double exact = (data_gradient(params, batch).array() * dir.array()).sum();
      CHECK(std::abs(fd - exact) <= 1e-5 * std::max(1.0, std::abs(exact)));
    }
  }
  SUBCASE("duplicated sample") {
    const CcnnParams params = random_params(gen, 4, 3, 2);
    const PatchMatrix z = random_patches(gen, 3, 4);
    const Matrix once = data_gradient(params, {{z, 0}});
    const Matrix twice = data_gradient(params, {{z, 0}, {z, 0}});
    CHECK((once - twice).norm() < 1e-15);
  }
  SUBCASE("class contributions cancel per patch") {
    const CcnnParams params = random_params(gen, 4, 3, 5);
    std::vector<LabeledPatches> batch;
    for (int i = 0; i < 6; ++i)
      batch.push_back({random_patches(gen, 3, 4), static_cast<int>(gen() % 5)});
    const Matrix g = data_gradient(params, batch);
    for (Index p = 0; p < 3; ++p) {
      Vector total = Vector::Zero(4);
      for (int k = 0; k < 5; ++k)
        total += g.col(k * 3 + p);
      CHECK(total.norm() < 1e-12);
    }
  }
  SUBCASE("dataset overload matches the list overload") {
    const CcnnParams params = random_params(gen, 4, 3, 3);
    std::vector<PatchMatrix> patches;
    std::vector<int> labels;
    std::vector<LabeledPatches> batch;
    for (int i = 0; i < 8; ++i) {
      patches.push_back(random_patches(gen, 3, 4));
      labels.push_back(static_cast<int>(gen() % 3));
    }
    const PatchedDataset data = make_patched(patches, labels, 3);
    const std::vector<Index> rows{5, 1, 1, 7};
    for (Index r : rows)
      batch.push_back({patches[r], labels[r]});
    CHECK((data_gradient(params, data, rows) - data_gradient(params, batch)).norm() < 1e-13);
  }
  SUBCASE("empty batch") {
    try {
      data_gradient(CcnnParams::zeros(2, 1, 2), std::vector<LabeledPatches>{});
      FAIL("expected an error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::empty_batch);
    }
  }
}

TEST_CASE("params persistence") {
  oracle::TempDir dir;
  std::mt19937_64 gen(6);
  const CcnnParams params = random_params(gen, 5, 4, 3);
  save_params(params, dir / "p.ccna");
  const CcnnParams back = load_params(dir / "p.ccna");
  CHECK(back.A == params.A);
  CHECK(back.patch_dim == 5);
  CHECK(back.patch_count == 4);
  CHECK(back.num_classes == 3);
  CHECK(digest(back) == digest(params));
  CcnnParams other = params;
  other.A(0, 0) += 1e-12;
  CHECK(digest(other) != digest(params));
}
