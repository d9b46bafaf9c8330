#include "ccnn/model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "ccnn/error.hpp"

namespace ccnn {

namespace {

constexpr std::uint32_t kParamsVersion = 1;

void require_shape(const CcnnParams &params, Index patch_count, Index patch_dim) {
  require(params.patch_count == patch_count && params.patch_dim == patch_dim,
          ErrorKind::shape_mismatch,
          "patches are " + std::to_string(patch_count) + " x " + std::to_string(patch_dim) +
              " but params expect " + std::to_string(params.patch_count) + " x " +
              std::to_string(params.patch_dim));
}

double log_sum_exp(const Eigen::Ref<const Vector> &v) {
  const double top = v.maxCoeff();
  return top + std::log((v.array() - top).exp().sum());
}

} // namespace

CcnnParams CcnnParams::zeros(Index patch_dim, Index patch_count, int num_classes) {
  require(patch_dim > 0 && patch_count > 0 && num_classes > 0, ErrorKind::invalid_argument,
          "params dimensions must be positive");
  return {Matrix::Zero(patch_dim, patch_count * num_classes), patch_dim, patch_count,
          num_classes};
}

void CcnnParams::validate() const {
  require(A.rows() == patch_dim && A.cols() == patch_count * num_classes,
          ErrorKind::shape_mismatch, "coefficient matrix does not match its metadata");
  require(A.allFinite(), ErrorKind::non_finite_input, "coefficients are not finite");
}

Vector score(const CcnnParams &params, const PatchMatrix &patches) {
  require_shape(params, patches.patch_count(), patches.patch_dim());
  const Eigen::Map<const Vector> z(patches.rows.data(), patches.rows.size());
  return params.coefficients().transpose() * z;
}

Matrix scores(const CcnnParams &params, const PatchedDataset &data) {
  require_shape(params, data.patch_count, data.patch_dim);
  require(params.num_classes == data.num_classes, ErrorKind::shape_mismatch,
          "class count mismatch");
  return data.features * params.coefficients();
}

Vector softmax_probs(const Eigen::Ref<const Vector> &logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

Matrix softmax_rows(const Matrix &logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i)
    out.row(i) = softmax_probs(logits.row(i).transpose()).transpose();
  return out;
}

double log_loss(const Eigen::Ref<const Vector> &scores, int label) {
  require(label >= 0 && label < scores.size(), ErrorKind::bad_label,
          "label " + std::to_string(label) + " outside [0, " +
              std::to_string(scores.size()) + ")");
  return log_sum_exp(scores) - scores(label);
}

double mean_log_loss(const CcnnParams &params, const PatchedDataset &data) {
  require(data.size() > 0, ErrorKind::empty_dataset, "no samples");
  const Matrix s = scores(params, data);
  double total = 0;
  for (Index i = 0; i < s.rows(); ++i)
    total += log_loss(s.row(i).transpose(), data.labels[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(s.rows());
}

Matrix data_gradient(const CcnnParams &params, const std::vector<LabeledPatches> &batch) {
  require(!batch.empty(), ErrorKind::empty_batch, "gradient of an empty batch");
  Matrix grad = Matrix::Zero(params.A.rows(), params.A.cols());
  Eigen::Map<Matrix> flat(grad.data(), params.patch_dim * params.patch_count,
                          params.num_classes);
  for (const auto &item : batch) {
    Vector residual = softmax_probs(score(params, item.patches));
    require(item.label >= 0 && item.label < params.num_classes, ErrorKind::bad_label,
            "label out of range");
    residual(item.label) -= 1.0;
    const Eigen::Map<const Vector> z(item.patches.rows.data(), item.patches.rows.size());
    flat.noalias() += z * residual.transpose();
  }
  grad /= static_cast<double>(batch.size());
  return grad;
}

Matrix data_gradient(const CcnnParams &params, const PatchedDataset &data,
                     std::span<const Index> batch) {
  require(!batch.empty(), ErrorKind::empty_batch, "gradient of an empty batch");
  require_shape(params, data.patch_count, data.patch_dim);
  const Index m = static_cast<Index>(batch.size());
  RowMatrix rows(m, data.features.cols());
  for (Index r = 0; r < m; ++r)
    rows.row(r) = data.features.row(batch[static_cast<std::size_t>(r)]);
  Matrix residual = softmax_rows(rows * params.coefficients());
  for (Index r = 0; r < m; ++r)
    residual(r, data.labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(r)])]) -= 1.0;

  Matrix grad(params.A.rows(), params.A.cols());
  Eigen::Map<Matrix> flat(grad.data(), params.patch_dim * params.patch_count,
                          params.num_classes);
  flat.noalias() = rows.transpose() * residual;
  grad /= static_cast<double>(m);
  return grad;
}

void save_params(const CcnnParams &params, const std::filesystem::path &path) {
  params.validate();
  detail::ByteWriter out;
  out.magic("CCNA");
  out.u32_le(kParamsVersion);
  out.u32_le(static_cast<std::uint32_t>(params.patch_dim));
  out.u32_le(static_cast<std::uint32_t>(params.patch_count));
  out.u32_le(static_cast<std::uint32_t>(params.num_classes));
  for (Index r = 0; r < params.A.rows(); ++r)
    for (Index c = 0; c < params.A.cols(); ++c)
      out.f64_le(params.A(r, c));
  out.save(path);
}

CcnnParams load_params(const std::filesystem::path &path) {
  detail::ByteReader in(path);
  in.expect_magic("CCNA");
  if (in.u32_le() != kParamsVersion)
    fail(ErrorKind::bad_header, path.string() + ": unsupported params version");
  const Index q = in.u32_le();
  const Index p = in.u32_le();
  const int d2 = static_cast<int>(in.u32_le());
  CcnnParams params = CcnnParams::zeros(q, p, d2);
  in.need(8 * static_cast<std::size_t>(q * p * d2));
  for (Index r = 0; r < params.A.rows(); ++r)
    for (Index c = 0; c < params.A.cols(); ++c)
      params.A(r, c) = in.f64_le();
  if (in.remaining() != 0)
    fail(ErrorKind::shape_mismatch, path.string() + ": trailing bytes after payload");
  return params;
}

std::uint64_t digest(const CcnnParams &params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(params.patch_dim));
  mix(static_cast<std::uint64_t>(params.patch_count));
  mix(static_cast<std::uint64_t>(params.num_classes));
  for (Index k = 0; k < params.A.size(); ++k)
    mix(std::bit_cast<std::uint64_t>(params.A.data()[k]));
  return h;
}

} // namespace ccnn
