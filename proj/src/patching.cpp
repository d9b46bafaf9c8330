#include "ccnn/patching.hpp"

#include <string>

#include "ccnn/error.hpp"

namespace ccnn {

Index patch_count(Index side, const PatchConfig &cfg) {
  require(cfg.patch_size >= 1 && cfg.stride >= 1, ErrorKind::invalid_argument,
          "patch size and stride must be positive");
  require(cfg.patch_size <= side, ErrorKind::misaligned_stride,
          "patch size " + std::to_string(cfg.patch_size) + " exceeds image side " +
              std::to_string(side));
  require((side - cfg.patch_size) % cfg.stride == 0, ErrorKind::misaligned_stride,
          "(side - patch_size) = " + std::to_string(side - cfg.patch_size) +
              " is not divisible by stride " + std::to_string(cfg.stride));
  const Index per_axis = (side - cfg.patch_size) / cfg.stride + 1;
  return per_axis * per_axis;
}

PatchMatrix extract_patches(const Sample &sample, const PatchConfig &cfg,
                            Index source_index) {
  require(sample.height == sample.width, ErrorKind::shape_mismatch,
          "patch extraction needs square inputs");
  const Index count = patch_count(sample.height, cfg);
  const Index per_axis = (sample.height - cfg.patch_size) / cfg.stride + 1;
  const Index l2 = cfg.patch_size;
  const Index d = sample.channels;

  PatchMatrix out;
  out.source_index = source_index;
  out.rows.resize(count, d * l2 * l2);
  for (Index gr = 0; gr < per_axis; ++gr) {
    for (Index gc = 0; gc < per_axis; ++gc) {
      const Index p = gr * per_axis + gc;
      const Index top = gr * cfg.stride;
      const Index left = gc * cfg.stride;
      Index k = 0;
      for (Index r = 0; r < l2; ++r)
        for (Index c = 0; c < l2; ++c)
          for (Index ch = 0; ch < d; ++ch)
            out.rows(p, k++) = sample.at(top + r, left + c, ch);
    }
  }
  return out;
}

PatchMatrix PatchedDataset::patches(Index i) const {
  PatchMatrix out;
  out.source_index = i;
  out.rows = Eigen::Map<const RowMatrix>(features.row(i).data(), patch_count, patch_dim);
  return out;
}

PatchedDataset make_patched(const std::vector<PatchMatrix> &patches,
                            const std::vector<int> &labels, int num_classes) {
  require(!patches.empty(), ErrorKind::empty_dataset, "no samples to patch");
  require(patches.size() == labels.size(), ErrorKind::size_mismatch,
          "patch and label counts differ");
  PatchedDataset out;
  out.patch_count = patches.front().patch_count();
  out.patch_dim = patches.front().patch_dim();
  out.num_classes = num_classes;
  out.labels = labels;
  out.features.resize(static_cast<Index>(patches.size()), out.patch_count * out.patch_dim);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto &pm = patches[i];
    require(pm.patch_count() == out.patch_count && pm.patch_dim() == out.patch_dim,
            ErrorKind::shape_mismatch, "patch matrices disagree in shape");
    out.features.row(static_cast<Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(pm.rows.data(), pm.rows.size());
  }
  return out;
}

PatchedDataset make_patched(const Dataset &data, const PatchConfig &cfg) {
  data.validate();
  std::vector<PatchMatrix> patches;
  patches.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    patches.push_back(extract_patches(data.samples[i], cfg, static_cast<Index>(i)));
  return make_patched(patches, data.labels(), data.num_classes);
}

PatchedDataset select(const PatchedDataset &data, const std::vector<Index> &indices) {
  PatchedDataset out;
  out.patch_dim = data.patch_dim;
  out.patch_count = data.patch_count;
  out.num_classes = data.num_classes;
  out.features.resize(static_cast<Index>(indices.size()), data.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = data.features.row(indices[r]);
    out.labels.push_back(data.labels.at(static_cast<std::size_t>(indices[r])));
  }
  return out;
}

} // namespace ccnn
