#include "ccnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ccnn/error.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/rng.hpp"
#include "text_format.hpp"

namespace ccnn {

namespace {

constexpr double kProbabilityFloor = 1e-12;

double replicate_log_likelihood(const PredictionCube &cube, const std::vector<int> &labels,
                                Index b) {
  double total = 0;
  for (Index i = 0; i < cube.samples(); ++i)
    total += std::log(
        std::max(cube(b, i, labels[static_cast<std::size_t>(i)]), kProbabilityFloor));
  return total;
}

void check_labels(const PredictionCube &cube, const std::vector<int> &labels) {
  require(static_cast<Index>(labels.size()) == cube.samples(), ErrorKind::size_mismatch,
          "label count does not match the cube");
  for (int y : labels)
    require(y >= 0 && y < cube.classes(), ErrorKind::bad_label, "label out of range");
}

} // namespace

double avg_log_likelihood(const PredictionCube &cube, const std::vector<int> &labels) {
  check_labels(cube, labels);
  require(cube.bootstraps() > 0, ErrorKind::size_mismatch, "empty cube");
  double total = 0;
  for (Index b = 0; b < cube.bootstraps(); ++b)
    total += replicate_log_likelihood(cube, labels, b);
  return total / static_cast<double>(cube.bootstraps());
}

double avg_interval_length(const IntervalTable &table) {
  require(table.lower.size() > 0 && table.lower.rows() == table.upper.rows() &&
              table.lower.cols() == table.upper.cols(),
          ErrorKind::size_mismatch, "malformed interval table");
  return (table.upper - table.lower).mean();
}

double standard_errors(std::span<const double> values) {
  require(values.size() >= 2, ErrorKind::insufficient_runs,
          "standard error needs at least two values");
  const double n = static_cast<double>(values.size());
  double mean = 0;
  for (double v : values)
    mean += v;
  mean /= n;
  double ss = 0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1)) / std::sqrt(n);
}

EvalSummary evaluate(const PredictionCube &cube, const IntervalTable &table,
                     const std::vector<int> &labels) {
  check_labels(cube, labels);
  EvalSummary s;
  s.avg_log_likelihood = avg_log_likelihood(cube, labels);
  s.avg_interval_length = avg_interval_length(table);

  std::vector<double> per_replicate;
  for (Index b = 0; b < cube.bootstraps(); ++b)
    per_replicate.push_back(replicate_log_likelihood(cube, labels, b));
  s.se_log_likelihood = standard_errors(per_replicate);

  const Vector per_sample = (table.upper - table.lower).rowwise().mean();
  if (per_sample.size() >= 2)
    s.se_interval_length = standard_errors({per_sample.data(), per_sample.data() + per_sample.size()});
  return s;
}

void write_summary_json(const EvalSummary &summary, const std::filesystem::path &path) {
  nlohmann::json doc = {
      {"avgLogLikelihood", summary.avg_log_likelihood},
      {"avgIntervalLength", summary.avg_interval_length},
      {"seLogLikelihood", summary.se_log_likelihood},
      {"seIntervalLength", summary.se_interval_length},
  };
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io_error, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

EvalSummary read_summary_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::missing_input, "cannot open " + path.string());
  const auto doc = nlohmann::json::parse(in);
  return {doc.at("avgLogLikelihood").get<double>(), doc.at("avgIntervalLength").get<double>(),
          doc.at("seLogLikelihood").get<double>(), doc.at("seIntervalLength").get<double>()};
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> values) : sorted_(std::move(values)) {
  require(!sorted_.empty(), ErrorKind::empty_dataset, "empirical CDF of no values");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double z) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), z);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double ks_distance(const EmpiricalCdf &f, const EmpiricalCdf &g) {
  // Both CDFs are right-continuous step functions, so the sup is attained at
  // one of the jump points.
  const auto &a = f.sorted_values();
  const auto &b = g.sorted_values();
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double sup = 0;
  while (i < a.size() || j < b.size()) {
    double z;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      z = a[i];
    else
      z = b[j];
    while (i < a.size() && a[i] <= z)
      ++i;
    while (j < b.size() && b[j] <= z)
      ++j;
    sup = std::max(sup, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return sup;
}

double binary_margin(const CcnnParams &params, const Eigen::Ref<const Vector> &x) {
  require(params.num_classes == 2 && params.patch_count == 1 && params.patch_dim == x.size(),
          ErrorKind::shape_mismatch, "binary_margin needs a two-class single-patch model");
  return params.A.col(1).dot(x) - params.A.col(0).dot(x);
}

std::vector<ConsistencyRow> consistency_check(const ConsistencyConfig &cfg) {
  require(!cfg.n_grid.empty(), ErrorKind::invalid_argument, "empty n grid");
  require(cfg.mc_reps >= 50, ErrorKind::invalid_argument, "mc_reps must be at least 50");
  require(cfg.bootstraps >= 100, ErrorKind::invalid_argument, "need at least 100 bootstraps");
  require(cfg.probe.size() == cfg.spec.input_dim, ErrorKind::shape_mismatch,
          "probe dimension does not match the synthetic spec");
  cfg.trainer.validate();

  const Index n_max = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
  const Index reference_size = cfg.reference_size == 0 ? 50 * n_max : cfg.reference_size;
  require(reference_size >= 50 * n_max, ErrorKind::invalid_argument,
          "reference size must be at least 50 * max(n_grid)");

  const PatchConfig single{1, 1};
  auto draw = [&](Index n, Seed stream) {
    SyntheticSpec spec = cfg.spec;
    spec.seed = derive_seed(cfg.seed, stream);
    return make_patched(generate_synthetic(spec, n), single);
  };
  auto trainer_for = [&](Seed stream) {
    TrainerConfig t = cfg.trainer;
    t.seed = derive_seed(cfg.seed ^ 0x7f4a7c15ULL, stream);
    return t;
  };

  Seed stream = 1;
  const CcnnParams reference = fit(draw(reference_size, stream), trainer_for(stream)).params;
  ++stream;
  const double f_ref = binary_margin(reference, cfg.probe);

  std::vector<ConsistencyRow> rows;
  for (Index n : cfg.n_grid) {
    std::vector<double> sampling;
    sampling.reserve(static_cast<std::size_t>(cfg.mc_reps));
    for (Index r = 0; r < cfg.mc_reps; ++r, ++stream)
      sampling.push_back(binary_margin(fit(draw(n, stream), trainer_for(stream)).params,
                                       cfg.probe) -
                         f_ref);

    const PatchedDataset observed = draw(n, stream);
    const CcnnParams base = fit(observed, trainer_for(stream)).params;
    ++stream;
    const double f_n = binary_margin(base, cfg.probe);
    std::vector<double> boot;
    boot.reserve(static_cast<std::size_t>(cfg.bootstraps));
    for (Index b = 0; b < cfg.bootstraps; ++b, ++stream) {
      const PatchedDataset resampled =
          select(observed, bootstrap_indices(n, n, derive_seed(cfg.seed, stream)));
      boot.push_back(binary_margin(fit(resampled, trainer_for(stream), base).params, cfg.probe) -
                     f_n);
    }
    rows.push_back({n, ks_distance(EmpiricalCdf(boot), EmpiricalCdf(sampling)), cfg.seed, f_ref});
  }
  return rows;
}

void write_consistency_csv(const std::vector<ConsistencyRow> &rows,
                           const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io_error, "cannot write " + path.string());
  out << "n,ksDistance,seed\n";
  for (const auto &r : rows)
    out << r.n << ',' << detail::format_double(r.ks_distance) << ',' << r.seed << '\n';
}

} // namespace ccnn
