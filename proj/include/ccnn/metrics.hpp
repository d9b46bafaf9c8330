#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ccnn/bootstrap.hpp"
#include "ccnn/data_io.hpp"
#include "ccnn/trainer.hpp"
#include "ccnn/types.hpp"

namespace ccnn {

/// (1/B) sum_b sum_i log pp[b, i, y_i], probabilities clamped below at 1e-12.
/// Larger is better; 0 means all mass on the true labels.
double avg_log_likelihood(const PredictionCube &cube, const std::vector<int> &labels);

/// Mean of upper - lower over every (sample, class).
double avg_interval_length(const IntervalTable &table);

/// Sample standard deviation / sqrt(count). Needs at least two values.
double standard_errors(std::span<const double> values);

struct EvalSummary {
  double avg_log_likelihood = 0;
  double avg_interval_length = 0;
  double se_log_likelihood = 0;  ///< over the per-replicate sums sum_i log pp[b, i, y_i]
  double se_interval_length = 0; ///< over the per-sample mean widths
};

EvalSummary evaluate(const PredictionCube &cube, const IntervalTable &table,
                     const std::vector<int> &labels);

void write_summary_json(const EvalSummary &summary, const std::filesystem::path &path);
EvalSummary read_summary_json(const std::filesystem::path &path);

class EmpiricalCdf {
public:
  EmpiricalCdf() = default;
  explicit EmpiricalCdf(std::vector<double> values);

  /// Fraction of values <= z.
  double operator()(double z) const;
  const std::vector<double> &sorted_values() const { return sorted_; }

private:
  std::vector<double> sorted_;
};

/// sup_z |F(z) - G(z)|.
double ks_distance(const EmpiricalCdf &f, const EmpiricalCdf &g);

struct ConsistencyConfig {
  SyntheticSpec spec;          ///< input_dim-dimensional binary problem
  std::vector<Index> n_grid;   ///< sample sizes to probe
  Index mc_reps = 100;         ///< independent datasets per n for H_n
  Index bootstraps = 200;      ///< B for H_Bn
  TrainerConfig trainer;       ///< should run to convergence
  Vector probe;                ///< x at which f is evaluated
  Seed seed = 0;
  /// Size of the dataset whose fit stands in for the population minimizer.
  /// 0 selects 50 * max(n_grid); smaller explicit values are rejected.
  Index reference_size = 0;
};

struct ConsistencyRow {
  Index n = 0;
  double ks_distance = 0;
  Seed seed = 0;
  double reference_score = 0; ///< f_ref(probe)
};

/// Empirical bootstrap-consistency harness.
///
/// For each n: H_n is the empirical law of f_n(x) - f_ref(x) over mc_reps
/// independent datasets, H_Bn that of f*_b(x) - f_n(x) over B resamples of
/// one further dataset, and the row reports sup_z |H_Bn - H_n|. f is the
/// logit difference f_1 - f_0 of the fitted binary CCNN (P = 1).
std::vector<ConsistencyRow> consistency_check(const ConsistencyConfig &cfg);

/// Logit difference f_1(x) - f_0(x) of a binary model with one patch.
double binary_margin(const CcnnParams &params, const Eigen::Ref<const Vector> &x);

/// CSV with header `n,ksDistance,seed`.
void write_consistency_csv(const std::vector<ConsistencyRow> &rows,
                           const std::filesystem::path &path);

} // namespace ccnn
