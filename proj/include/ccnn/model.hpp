#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ccnn/patching.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

/// The CCNN coefficient matrix A = [A^(1), ..., A^(d2)], A^(k) = [A_1, ..., A_P].
///
/// A has shape patch_dim x (patch_count * num_classes); column k * P + p holds
/// A_p for class k. Because Eigen is column-major, the same buffer viewed as a
/// (patch_dim * P) x d2 matrix (see `coefficients()`) has one column per class
/// that lines up entry-for-entry with a flattened PatchMatrix.
struct CcnnParams {
  Matrix A;
  Index patch_dim = 0;
  Index patch_count = 0;
  int num_classes = 0;

  static CcnnParams zeros(Index patch_dim, Index patch_count, int num_classes);
  static CcnnParams zeros_like(const PatchedDataset &data) {
    return zeros(data.patch_dim, data.patch_count, data.num_classes);
  }

  Eigen::Map<const Matrix> coefficients() const {
    return {A.data(), patch_dim * patch_count, num_classes};
  }
  Eigen::Map<Matrix> coefficients() { return {A.data(), patch_dim * patch_count, num_classes}; }

  void validate() const;
  bool matches(const PatchedDataset &data) const {
    return patch_dim == data.patch_dim && patch_count == data.patch_count &&
           num_classes == data.num_classes;
  }
};

/// f_k(x) = sum_p <A_p^(k), z_p(x)> for every class k.
Vector score(const CcnnParams &params, const PatchMatrix &patches);

/// Scores for every row of a patched dataset, n x d2.
Matrix scores(const CcnnParams &params, const PatchedDataset &data);

/// Max-shifted softmax.
Vector softmax_probs(const Eigen::Ref<const Vector> &logits);
Matrix softmax_rows(const Matrix &logits);

/// -log softmax(scores)[label], via log-sum-exp.
double log_loss(const Eigen::Ref<const Vector> &scores, int label);

double mean_log_loss(const CcnnParams &params, const PatchedDataset &data);

struct LabeledPatches {
  PatchMatrix patches;
  int label = 0;
};

/// Gradient of the batch-mean log-loss with respect to A.
Matrix data_gradient(const CcnnParams &params, const std::vector<LabeledPatches> &batch);

/// Same quantity for the rows `batch` of a patched dataset.
Matrix data_gradient(const CcnnParams &params, const PatchedDataset &data,
                     std::span<const Index> batch);

// "CCNA" | u32 version=1 | u32 q | u32 P | u32 d2 | q*(P*d2) f64 row-major.
void save_params(const CcnnParams &params, const std::filesystem::path &path);
CcnnParams load_params(const std::filesystem::path &path);

/// FNV-1a over the dimensions and raw coefficient bytes.
std::uint64_t digest(const CcnnParams &params);

} // namespace ccnn
