#pragma once

#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "ccnn/model.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

/// min (1/n) sum L  subject to ||A||_* <= radius  (projected SGD).
struct ConstrainedMode {
  double radius = 1.0;
};

/// min (1/n) sum L + lambda ||A||_{*mu}  (plain SGD on the smooth objective).
struct PenalizedMode {
  double lambda = 0.01;
  double mu = 0.1;
};

using TrainingMode = std::variant<ConstrainedMode, PenalizedMode>;

/// What `TrainerConfig::iterations` counts.
enum class IterationUnit { epoch, step };

struct TrainerConfig {
  TrainingMode mode = ConstrainedMode{};
  double step_size = 0.1;
  Index batch_size = 32;
  /// Number of passes (unit == epoch) or mini-batch steps (unit == step).
  Index iterations = 10;
  IterationUnit unit = IterationUnit::epoch;
  Seed seed = 0;
  /// Step size is multiplied by this after every completed epoch.
  double step_decay = 1.0;
  double svd_tolerance = 1e-10;

  void validate() const;
};

struct FitResult {
  CcnnParams params;
  double final_objective = 0;
  /// Entry 0 is the objective at the initial point, entry e after epoch e.
  /// A trailing partial epoch (step unit) adds one more entry.
  std::vector<double> objective_trace;
  std::vector<double> nuclear_norm_trace;
  Index iterations = 0; ///< mini-batch steps taken
};

/// Exactly the quantity `fit` minimizes: mean log-loss, plus
/// lambda * ||A||_{*mu} in penalized mode.
double objective(const PatchedDataset &data, const TrainerConfig &cfg,
                 const CcnnParams &params);

/// Mini-batch (projected) SGD from the zero matrix.
///
/// Each epoch walks a seed-shuffled permutation of the rows in consecutive
/// batches. Constrained mode projects onto the nuclear ball after every step;
/// penalized mode adds lambda * grad ||A||_{*mu}. Aborts with
/// non-finite-objective when an epoch ends with a non-finite objective or one
/// above 10 * max(initial objective, ln d2).
FitResult fit(const PatchedDataset &data, const TrainerConfig &cfg);

/// Warm start from `init`.
FitResult fit(const PatchedDataset &data, const TrainerConfig &cfg, const CcnnParams &init);

struct WarmColdReport {
  double cold_objective = 0;
  double warm_objective = 0;
  double objective_gap = 0;
  double parameter_distance = 0; ///< Frobenius norm of the difference
};

/// Fits from zero and from a random Gaussian start (entries scaled by
/// `init_scale`, projected onto the ball in constrained mode) and compares.
WarmColdReport warm_vs_cold_check(const PatchedDataset &data, const TrainerConfig &cfg,
                                  Seed init_seed, double init_scale = 1.0);

/// CSV with header `epoch,objective,nuclearNorm`.
void write_trace_csv(const FitResult &result, const std::filesystem::path &path);

} // namespace ccnn
