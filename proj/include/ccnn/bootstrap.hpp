#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ccnn/model.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/trainer.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

enum class ChainMode {
  warm_chain,         ///< replicate b starts from replicate b-1
  parallel_from_base, ///< every replicate starts from the base fit
};

struct BootstrapConfig {
  Index num_bootstraps = 100; ///< B
  double alpha = 0.05;        ///< intervals have level 1 - alpha
  ChainMode chain = ChainMode::warm_chain;
  TrainerConfig base_trainer; ///< fit on the full training set (A_0)
  TrainerConfig trainer;      ///< fit on each resample
  Seed seed = 0;

  void validate() const;
};

/// pp[b, i, k]: probability of class k for test sample i under replicate b.
class PredictionCube {
public:
  PredictionCube() = default;
  PredictionCube(Index bootstraps, Index samples, Index classes)
      : bootstraps_(bootstraps), samples_(samples), classes_(classes),
        values_(static_cast<std::size_t>(bootstraps * samples * classes), 0.0) {}

  Index bootstraps() const { return bootstraps_; }
  Index samples() const { return samples_; }
  Index classes() const { return classes_; }

  double &operator()(Index b, Index i, Index k) { return values_[offset(b, i, k)]; }
  double operator()(Index b, Index i, Index k) const { return values_[offset(b, i, k)]; }

  /// (pp[1, i, k], ..., pp[B, i, k])
  Vector column(Index i, Index k) const;
  /// n' x d2 probabilities of replicate b.
  Matrix slice(Index b) const;
  void set_slice(Index b, const Matrix &probs);
  /// Mean over replicates, n' x d2.
  Matrix mean() const;

  const std::vector<double> &values() const { return values_; }

  bool operator==(const PredictionCube &) const = default;

private:
  std::size_t offset(Index b, Index i, Index k) const {
    return static_cast<std::size_t>((b * samples_ + i) * classes_ + k);
  }

  Index bootstraps_ = 0;
  Index samples_ = 0;
  Index classes_ = 0;
  std::vector<double> values_;
};

struct BootstrapResult {
  PredictionCube cube;
  CcnnParams base;                    ///< A_0
  std::vector<std::uint64_t> digests; ///< digest(A_b), b = 1..B
};

/// Called after each replicate with (b, B); 1-based b.
using ProgressFn = std::function<void(Index, Index)>;

/// The warm-start bootstrap: fit A_0 on `train`, then for b = 1..B resample
/// n rows with replacement, refit from A_{b-1} (or A_0), and record the
/// softmax predictions on `test`. Fit errors are rethrown with the replicate
/// index in the message.
BootstrapResult run_bootstrap(const PatchedDataset &train, const PatchedDataset &test,
                              const BootstrapConfig &cfg, const ProgressFn &progress = {});

/// Empirical quantile of `values` at level q in [0, 1], linear interpolation
/// between order statistics: with x sorted and h = (B - 1) q,
/// Q(q) = x[floor(h)] + (h - floor(h)) (x[floor(h) + 1] - x[floor(h)]).
double quantile(std::vector<double> values, double q);

struct IntervalTable {
  Matrix lower; ///< n' x d2
  Matrix upper;
  double alpha = 0.05;

  double level() const { return 1.0 - alpha; }
};

/// Per (i, c): [Q(alpha / 2), Q(1 - alpha / 2)] of the replicate column.
IntervalTable intervals(const PredictionCube &cube, double alpha);

struct IntervalRecord {
  Index sample_index = 0;
  int true_label = 0;
  int predicted_class = 0; ///< argmax of the replicate-mean probability
  int class_index = 0;
  double lower = 0;
  double upper = 0;
  double width = 0;
};

/// One record per (sample, class), sample-major.
std::vector<IntervalRecord> interval_report(const IntervalTable &table,
                                            const PredictionCube &cube,
                                            const std::vector<int> &labels);

// Interval CSV: a `# alpha=<value>` line, then the header
// sampleIndex,trueLabel,predictedClass,class,lower,upper,width.
void write_interval_csv(const std::vector<IntervalRecord> &records, double alpha,
                        const std::filesystem::path &path);
struct IntervalCsv {
  double alpha = 0;
  std::vector<IntervalRecord> records;
};
IntervalCsv read_interval_csv(const std::filesystem::path &path);

// "CCNP" | u32 version=1 | u32 B | u32 n' | u32 d2 | B*n'*d2 f32 (b-major).
void save_cube(const PredictionCube &cube, const std::filesystem::path &path);
PredictionCube load_cube(const std::filesystem::path &path);

/// Cube with every entry rounded to float, i.e. what save_cube persists.
PredictionCube quantize_to_float(const PredictionCube &cube);

/// Histogram data for sample i: header `bootstrap,class_0,...,class_{d2-1}`,
/// then B rows of probabilities.
void write_histogram_csv(const PredictionCube &cube, Index sample,
                         const std::filesystem::path &path);

} // namespace ccnn
