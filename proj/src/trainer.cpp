#include "ccnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "ccnn/error.hpp"
#include "ccnn/rng.hpp"
#include "ccnn/spectral.hpp"
#include "text_format.hpp"

namespace ccnn {

namespace {

struct Step {
  const TrainerConfig &cfg;

  void operator()(Matrix &a, const Matrix &grad, double eta) const {
    if (const auto *c = std::get_if<ConstrainedMode>(&cfg.mode)) {
      a = project_nuclear_ball(a - eta * grad, c->radius, cfg.svd_tolerance);
    } else {
      const auto &p = std::get<PenalizedMode>(cfg.mode);
      a -= eta * (grad + p.lambda * smoothed_nuclear_norm_grad(a, p.mu));
    }
  }
};

Matrix full_gradient(const CcnnParams &params, const PatchedDataset &data) {
  Matrix residual = softmax_rows(data.features * params.coefficients());
  for (Index r = 0; r < data.size(); ++r)
    residual(r, data.labels[static_cast<std::size_t>(r)]) -= 1.0;
  Matrix grad(params.A.rows(), params.A.cols());
  Eigen::Map<Matrix> flat(grad.data(), params.patch_dim * params.patch_count,
                          params.num_classes);
  flat.noalias() = data.features.transpose() * residual;
  grad /= static_cast<double>(data.size());
  return grad;
}

} // namespace

void TrainerConfig::validate() const {
  if (const auto *c = std::get_if<ConstrainedMode>(&mode)) {
    require(c->radius > 0, ErrorKind::nonpositive_radius, "radius C must be positive");
  } else {
    const auto &p = std::get<PenalizedMode>(mode);
    require(p.lambda >= 0, ErrorKind::invalid_argument, "lambda must be nonnegative");
    require(p.mu > 0, ErrorKind::nonpositive_mu, "mu must be positive");
  }
  require(step_size > 0, ErrorKind::invalid_argument, "step size must be positive");
  require(batch_size > 0, ErrorKind::invalid_argument, "batch size must be positive");
  require(iterations >= 0, ErrorKind::invalid_argument, "iterations must be nonnegative");
  require(step_decay > 0 && step_decay <= 1, ErrorKind::invalid_argument,
          "step decay must lie in (0, 1]");
  require(svd_tolerance > 0 && svd_tolerance <= 1e-3, ErrorKind::invalid_argument,
          "svd tolerance must lie in (0, 1e-3]");
}

double objective(const PatchedDataset &data, const TrainerConfig &cfg,
                 const CcnnParams &params) {
  require(params.matches(data), ErrorKind::shape_mismatch,
          "params do not match the data shape");
  double value = mean_log_loss(params, data);
  if (const auto *p = std::get_if<PenalizedMode>(&cfg.mode))
    value += p->lambda * smoothed_nuclear_norm(params.A, p->mu);
  return value;
}

FitResult fit(const PatchedDataset &data, const TrainerConfig &cfg) {
  return fit(data, cfg, CcnnParams::zeros_like(data));
}

FitResult fit(const PatchedDataset &data, const TrainerConfig &cfg, const CcnnParams &init) {
  cfg.validate();
  require(data.size() > 0, ErrorKind::empty_dataset, "cannot fit an empty dataset");
  require(init.matches(data), ErrorKind::shape_mismatch,
          "initial params do not match the data shape");
  init.validate();

  const Index n = data.size();
  const Index batch = std::min(cfg.batch_size, n);
  const Index steps_per_epoch = (n + batch - 1) / batch;
  const Index total_steps =
      cfg.unit == IterationUnit::epoch ? cfg.iterations * steps_per_epoch : cfg.iterations;

  FitResult result;
  result.params = init;
  auto record = [&]() {
    const double value = objective(data, cfg, result.params);
    result.objective_trace.push_back(value);
    result.nuclear_norm_trace.push_back(nuclear_norm(result.params.A));
    return value;
  };

  const double initial = record();
  const double ceiling = 10.0 * std::max(initial, std::log(double(data.num_classes)));
  auto guard = [&](double value, Index epoch) {
    if (!std::isfinite(value) || value > ceiling)
      fail(ErrorKind::non_finite_objective,
           "objective diverged to " + detail::format_double(value) + " at epoch " +
               std::to_string(epoch));
  };

  Rng rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Step step{cfg};
  double eta = cfg.step_size;

  Index epoch = 0;
  while (result.iterations < total_steps) {
    for (Index i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    for (Index start = 0; start < n && result.iterations < total_steps; start += batch) {
      const Matrix grad =
          batch == n ? full_gradient(result.params, data)
                     : data_gradient(result.params, data,
                                     std::span<const Index>(order).subspan(
                                         static_cast<std::size_t>(start),
                                         static_cast<std::size_t>(std::min(batch, n - start))));
      step(result.params.A, grad, eta);
      ++result.iterations;
      if (!result.params.A.allFinite())
        fail(ErrorKind::non_finite_objective,
             "coefficients became non-finite in epoch " + std::to_string(epoch + 1));
    }
    ++epoch;
    guard(record(), epoch);
    eta *= cfg.step_decay;
  }
  result.final_objective = result.objective_trace.back();
  return result;
}

WarmColdReport warm_vs_cold_check(const PatchedDataset &data, const TrainerConfig &cfg,
                                  Seed init_seed, double init_scale) {
  const FitResult cold = fit(data, cfg);
  Rng rng(init_seed);
  CcnnParams start = CcnnParams::zeros_like(data);
  start.A = init_scale * rng.normal_matrix(start.A.rows(), start.A.cols());
  if (const auto *c = std::get_if<ConstrainedMode>(&cfg.mode))
    start.A = project_nuclear_ball(start.A, c->radius, cfg.svd_tolerance);
  const FitResult warm = fit(data, cfg, start);

  WarmColdReport report;
  report.cold_objective = cold.final_objective;
  report.warm_objective = warm.final_objective;
  report.objective_gap = std::abs(cold.final_objective - warm.final_objective);
  report.parameter_distance = (cold.params.A - warm.params.A).norm();
  return report;
}

void write_trace_csv(const FitResult &result, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io_error, "cannot write " + path.string());
  out << "epoch,objective,nuclearNorm\n";
  for (std::size_t e = 0; e < result.objective_trace.size(); ++e)
    out << e << ',' << detail::format_double(result.objective_trace[e]) << ','
        << detail::format_double(result.nuclear_norm_trace[e]) << '\n';
}

} // namespace ccnn
