#include "ccnn/kernelizer.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "binary_io.hpp"
#include "ccnn/error.hpp"
#include "ccnn/rng.hpp"

namespace ccnn {

double rbf_kernel(const Eigen::Ref<const Vector> &u, const Eigen::Ref<const Vector> &v,
                  double gamma) {
  return std::exp(-gamma * (u - v).squaredNorm());
}

Vector KernelFeatureMap::kernel_column(const Eigen::Ref<const Vector> &z) const {
  require(z.size() == patch_dim(), ErrorKind::shape_mismatch,
          "patch dimension " + std::to_string(z.size()) + " does not match anchors (" +
              std::to_string(patch_dim()) + ")");
  Vector k(anchor_count());
  for (Index i = 0; i < anchor_count(); ++i)
    k(i) = std::exp(-gamma * (anchors.row(i).transpose() - z).squaredNorm());
  return k;
}

Vector KernelFeatureMap::features(const Eigen::Ref<const Vector> &z) const {
  return transform * kernel_column(z);
}

KernelFeatureMap build_feature_map(const RowMatrix &pool, double gamma, Index anchor_count,
                                   Seed seed, double eigen_cutoff) {
  require(gamma > 0, ErrorKind::invalid_argument, "gamma must be positive");
  require(anchor_count >= 1, ErrorKind::invalid_argument, "need at least one anchor");
  require(pool.rows() >= anchor_count, ErrorKind::insufficient_anchors,
          "pool has " + std::to_string(pool.rows()) + " patches, need " +
              std::to_string(anchor_count));

  // Partial Fisher-Yates: the first m entries are a uniform sample without
  // replacement.
  Rng rng(seed);
  std::vector<Index> idx(static_cast<std::size_t>(pool.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < anchor_count; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(pool.rows() - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }

  KernelFeatureMap map;
  map.gamma = gamma;
  map.anchors.resize(anchor_count, pool.cols());
  for (Index i = 0; i < anchor_count; ++i)
    map.anchors.row(i) = pool.row(idx[static_cast<std::size_t>(i)]);

  Matrix gram(anchor_count, anchor_count);
  for (Index i = 0; i < anchor_count; ++i)
    for (Index j = 0; j <= i; ++j)
      gram(i, j) = gram(j, i) =
          rbf_kernel(map.anchors.row(i).transpose(), map.anchors.row(j).transpose(), gamma);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector &lambda = eig.eigenvalues(); // ascending
  const double cutoff = eigen_cutoff * lambda.maxCoeff();
  Index keep = 0;
  for (Index i = 0; i < lambda.size(); ++i)
    keep += lambda(i) > cutoff ? 1 : 0;
  if (keep == 0 || !(lambda.maxCoeff() > 0))
    fail(ErrorKind::rank_deficient, "anchor Gram matrix has no eigenvalue above the cutoff");

  // Largest eigenvalues first.
  map.transform.resize(keep, anchor_count);
  for (Index r = 0; r < keep; ++r) {
    const Index col = lambda.size() - 1 - r;
    map.transform.row(r) = eig.eigenvectors().col(col).transpose() / std::sqrt(lambda(col));
  }
  return map;
}

RowMatrix patch_pool(const Dataset &data, const PatchConfig &cfg) {
  const PatchedDataset patched = make_patched(data, cfg);
  RowMatrix pool(patched.size() * patched.patch_count, patched.patch_dim);
  for (Index i = 0; i < patched.size(); ++i)
    pool.middleRows(i * patched.patch_count, patched.patch_count) =
        Eigen::Map<const RowMatrix>(patched.features.row(i).data(), patched.patch_count,
                                    patched.patch_dim);
  return pool;
}

KernelFeatureMap build_feature_map(const Dataset &source, const PatchConfig &patch_cfg,
                                   const KernelConfig &cfg, Seed seed) {
  const Dataset &from = cfg.secondary_data ? *cfg.secondary_data : source;
  return build_feature_map(patch_pool(from, patch_cfg), cfg.gamma, cfg.anchor_count, seed,
                           cfg.eigen_cutoff);
}

PatchMatrix featurize(const KernelFeatureMap &map, const PatchMatrix &patches) {
  require(patches.patch_dim() == map.patch_dim(), ErrorKind::shape_mismatch,
          "patch dimension does not match the feature map");
  PatchMatrix out;
  out.source_index = patches.source_index;
  out.rows.resize(patches.patch_count(), map.feature_dim());
  for (Index p = 0; p < patches.patch_count(); ++p)
    out.rows.row(p) = map.features(patches.rows.row(p).transpose()).transpose();
  return out;
}

PatchedDataset featurize(const KernelFeatureMap &map, const PatchedDataset &data) {
  require(data.patch_dim == map.patch_dim(), ErrorKind::shape_mismatch,
          "patch dimension does not match the feature map");
  PatchedDataset out;
  out.patch_count = data.patch_count;
  out.patch_dim = map.feature_dim();
  out.num_classes = data.num_classes;
  out.labels = data.labels;

  // One GEMM for all kernel evaluations: ||a - z||^2 = |a|^2 + |z|^2 - 2 a.z
  const Index total = data.size() * data.patch_count;
  const Eigen::Map<const RowMatrix> patches(data.features.data(), total, data.patch_dim);
  const Vector anchor_sq = map.anchors.rowwise().squaredNorm();
  Matrix k = patches * map.anchors.transpose(); // total x m
  const Vector patch_sq = patches.rowwise().squaredNorm();
  for (Index j = 0; j < k.cols(); ++j)
    for (Index i = 0; i < k.rows(); ++i)
      k(i, j) = std::exp(-map.gamma * std::max(0.0, patch_sq(i) + anchor_sq(j) - 2 * k(i, j)));

  out.features.resize(data.size(), data.patch_count * out.patch_dim);
  Eigen::Map<RowMatrix> feats(out.features.data(), total, out.patch_dim);
  feats.noalias() = k * map.transform.transpose();
  return out;
}

void save_feature_map(const KernelFeatureMap &map, const std::filesystem::path &path) {
  detail::ByteWriter out;
  out.magic("CCNK");
  out.u32_le(1);
  out.u32_le(static_cast<std::uint32_t>(map.anchor_count()));
  out.u32_le(static_cast<std::uint32_t>(map.feature_dim()));
  out.u32_le(static_cast<std::uint32_t>(map.patch_dim()));
  out.f64_le(map.gamma);
  for (Index i = 0; i < map.anchors.rows(); ++i)
    for (Index j = 0; j < map.anchors.cols(); ++j)
      out.f64_le(map.anchors(i, j));
  for (Index i = 0; i < map.transform.rows(); ++i)
    for (Index j = 0; j < map.transform.cols(); ++j)
      out.f64_le(map.transform(i, j));
  out.save(path);
}

KernelFeatureMap load_feature_map(const std::filesystem::path &path) {
  detail::ByteReader in(path);
  in.expect_magic("CCNK");
  if (in.u32_le() != 1)
    fail(ErrorKind::bad_header, path.string() + ": unsupported feature map version");
  const Index m = in.u32_le();
  const Index kept = in.u32_le();
  const Index dim = in.u32_le();
  KernelFeatureMap map;
  map.gamma = in.f64_le();
  in.need(8 * static_cast<std::size_t>(m * dim + kept * m));
  map.anchors.resize(m, dim);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < dim; ++j)
      map.anchors(i, j) = in.f64_le();
  map.transform.resize(kept, m);
  for (Index i = 0; i < kept; ++i)
    for (Index j = 0; j < m; ++j)
      map.transform(i, j) = in.f64_le();
  return map;
}

} // namespace ccnn
