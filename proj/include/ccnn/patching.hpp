#pragma once

#include <vector>

#include "ccnn/data_io.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

struct PatchConfig {
  Index patch_size = 1; ///< side length of a square patch
  Index stride = 1;
};

/// Vectorized patches of one sample: row p is z_p(x).
///
/// Rows are ordered row-major over the grid of patch top-left corners; each
/// row flattens its patch row-major over (row, col, channel). The storage is
/// row-major, so the whole matrix read linearly is the concatenation
/// z_1, ..., z_P.
struct PatchMatrix {
  RowMatrix rows;
  Index source_index = -1;

  Index patch_count() const { return rows.rows(); }
  Index patch_dim() const { return rows.cols(); }
};

/// ((side - patch_size) / stride + 1)^2; throws misaligned-stride unless the
/// patches tile exactly.
Index patch_count(Index side, const PatchConfig &cfg);

PatchMatrix extract_patches(const Sample &sample, const PatchConfig &cfg,
                            Index source_index = -1);

/// Patch-level design matrix for a whole dataset.
///
/// Row i of `features` is sample i's PatchMatrix laid out linearly
/// (P * patch_dim entries). This is the representation the trainer and the
/// bootstrap consume; kernel featurization maps one of these to another.
struct PatchedDataset {
  RowMatrix features;
  std::vector<int> labels;
  Index patch_dim = 0;
  Index patch_count = 0;
  int num_classes = 0;

  Index size() const { return features.rows(); }
  PatchMatrix patches(Index i) const;
};

PatchedDataset make_patched(const Dataset &data, const PatchConfig &cfg);
PatchedDataset make_patched(const std::vector<PatchMatrix> &patches,
                            const std::vector<int> &labels, int num_classes);

PatchedDataset select(const PatchedDataset &data, const std::vector<Index> &indices);

} // namespace ccnn
