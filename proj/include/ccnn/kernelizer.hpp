#pragma once

#include <filesystem>
#include <optional>

#include "ccnn/data_io.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

struct KernelConfig {
  double gamma = 1.0;      ///< k(u, v) = exp(-gamma ||u - v||^2)
  Index anchor_count = 64; ///< m
  /// Anchors are drawn from this dataset's patches when present, so the
  /// features do not depend on the training samples.
  std::optional<Dataset> secondary_data;
  double eigen_cutoff = 1e-10; ///< relative to the largest Gram eigenvalue
};

double rbf_kernel(const Eigen::Ref<const Vector> &u, const Eigen::Ref<const Vector> &v,
                  double gamma);

/// Nystrom feature map phi(z) = transform * [k(a_1, z), ..., k(a_m, z)]^T.
///
/// With K_mm = U diag(lambda) U^T the anchor Gram matrix, transform is
/// diag(lambda)^{-1/2} U^T restricted to eigenvalues above the cutoff, so
/// <phi(a_i), phi(a_j)> = K_mm(i, j) on the anchors.
struct KernelFeatureMap {
  double gamma = 1.0;
  RowMatrix anchors; ///< m x patch_dim
  Matrix transform;  ///< m' x m

  Index anchor_count() const { return anchors.rows(); }
  Index feature_dim() const { return transform.rows(); }
  Index patch_dim() const { return anchors.cols(); }

  Vector kernel_column(const Eigen::Ref<const Vector> &z) const;
  Vector features(const Eigen::Ref<const Vector> &z) const;
};

/// Build from an explicit pool of patch vectors (one per row); m distinct
/// rows are drawn uniformly without replacement.
KernelFeatureMap build_feature_map(const RowMatrix &patch_pool, double gamma,
                                   Index anchor_count, Seed seed,
                                   double eigen_cutoff = 1e-10);

/// Pool = every patch of `source` (or of cfg.secondary_data when set).
KernelFeatureMap build_feature_map(const Dataset &source, const PatchConfig &patch_cfg,
                                   const KernelConfig &cfg, Seed seed);

PatchMatrix featurize(const KernelFeatureMap &map, const PatchMatrix &patches);
PatchedDataset featurize(const KernelFeatureMap &map, const PatchedDataset &data);

/// All patches of a dataset stacked as rows.
RowMatrix patch_pool(const Dataset &data, const PatchConfig &cfg);

// "CCNK" | u32 version=1 | u32 m | u32 m' | u32 patch_dim | f64 gamma |
// m*patch_dim f64 anchors | m'*m f64 transform, all row-major little-endian.
void save_feature_map(const KernelFeatureMap &map, const std::filesystem::path &path);
KernelFeatureMap load_feature_map(const std::filesystem::path &path);

} // namespace ccnn
