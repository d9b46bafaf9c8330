#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ccnn/error.hpp"
#include "config.hpp"

using namespace ccnn;
using namespace ccnn::cli;

namespace {

constexpr int exit_usage = 2;
constexpr int exit_runtime = 3;

/// Timestamps go here and nowhere else, so every other artifact is a pure
/// function of the config.
class RunLog {
public:
  RunLog(const fs::path &path, bool echo) : out_(path), echo_(echo) {}

  void line(const std::string &msg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
    out_.flush();
    if (echo_)
      std::cerr << msg << '\n';
  }

private:
  std::ofstream out_;
  bool echo_;
};

/// Names the pipeline stage currently running, for error reports.
struct Stage {
  std::string name = "config";
};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void report_error(const std::string &stage, const std::string &kind, const std::string &message) {
  std::cerr << json{{"stage", stage}, {"kind", kind}, {"message", message}}.dump() << '\n';
}

struct Features {
  PatchedDataset train, test;
};

/// Patches (and, when configured, kernel-featurizes) the datasets. The
/// feature map is saved alongside the other artifacts.
Features featurize_all(const ModelSection &model, const Dataset &train, const Dataset *test,
                       const fs::path &out_dir, Stage &stage, RunLog &log) {
  stage.name = "patching";
  Features f;
  f.train = make_patched(train, model.patch);
  if (test)
    f.test = make_patched(*test, model.patch);
  if (!model.kernel)
    return f;

  stage.name = "kernel";
  KernelConfig kc;
  kc.gamma = model.kernel->gamma;
  kc.anchor_count = model.kernel->anchors;
  if (model.kernel->secondary)
    kc.secondary_data = model.kernel->secondary->load();
  const KernelFeatureMap map = build_feature_map(train, model.patch, kc, model.kernel->seed);
  save_feature_map(map, out_dir / "kernel.ccnk");
  log.line("kernel feature map: m=" + std::to_string(map.anchor_count()) +
           " dim=" + std::to_string(map.feature_dim()));
  f.train = featurize(map, f.train);
  if (test)
    f.test = featurize(map, f.test);
  return f;
}

json run_train(const Experiment &e, Stage &stage, RunLog &log) {
  const TrainCommand &c = *e.train;
  stage.name = "data";
  const Dataset train = c.train.load();
  log.line("train: n=" + std::to_string(train.size()) + " d2=" + std::to_string(train.num_classes));
  const Features f = featurize_all(c.model, train, nullptr, e.output_dir, stage, log);

  stage.name = "train";
  const FitResult r = fit(f.train, c.trainer);
  stage.name = "write";
  save_params(r.params, e.output_dir / "params.ccna");
  write_trace_csv(r, e.output_dir / "trace.csv");
  return {{"final_objective", r.final_objective}, {"steps", r.iterations}};
}

double mean_prob_accuracy(const PredictionCube &cube, const std::vector<int> &labels) {
  const Matrix mean = cube.mean();
  Index hits = 0;
  for (Index i = 0; i < mean.rows(); ++i) {
    Index arg = 0;
    mean.row(i).maxCoeff(&arg);
    hits += arg == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(mean.rows());
}

json run_bootstrap_cmd(const Experiment &e, Stage &stage, RunLog &log) {
  const BootstrapCommand &c = *e.bootstrap;
  stage.name = "data";
  const Dataset train = c.train.load(), test = c.test.load();
  require(train.num_classes == test.num_classes, ErrorKind::shape_mismatch,
          "train and test disagree on the number of classes");
  log.line("bootstrap: n=" + std::to_string(train.size()) + " n'=" + std::to_string(test.size()) +
           " B=" + std::to_string(c.bootstrap.num_bootstraps));
  const Features f = featurize_all(c.model, train, &test, e.output_dir, stage, log);

  stage.name = "bootstrap";
  const Index every = std::max<Index>(1, c.bootstrap.num_bootstraps / 20);
  const BootstrapResult r = run_bootstrap(f.train, f.test, c.bootstrap, [&](Index b, Index total) {
    if (b % every == 0 || b == total)
      log.line("replicate " + std::to_string(b) + "/" + std::to_string(total));
  });

  stage.name = "write";
  // Everything downstream is computed from the float cube that is persisted,
  // so the summary can be recomputed exactly from the files.
  const PredictionCube cube = quantize_to_float(r.cube);
  const std::vector<int> labels = test.labels();
  const IntervalTable table = intervals(cube, c.bootstrap.alpha);
  const EvalSummary summary = evaluate(cube, table, labels);
  save_params(r.base, e.output_dir / "base.ccna");
  save_cube(cube, e.output_dir / "cube.ccnp");
  write_interval_csv(interval_report(table, cube, labels), c.bootstrap.alpha,
                     e.output_dir / "intervals.csv");
  write_summary_json(summary, e.output_dir / "summary.json");
  if (c.histograms) {
    const fs::path dir = e.output_dir / "histograms";
    fs::create_directories(dir);
    for (Index i = 0; i < cube.samples(); ++i) {
      std::ostringstream name;
      name << "sample_" << std::setw(5) << std::setfill('0') << i << ".csv";
      write_histogram_csv(cube, i, dir / name.str());
    }
  }
  return {{"avg_log_likelihood", summary.avg_log_likelihood},
          {"avg_interval_length", summary.avg_interval_length},
          {"mean_probability_accuracy", mean_prob_accuracy(cube, labels)}};
}

json run_extract(const Experiment &e, const WeightBundle &bundle, Stage &stage, RunLog &log) {
  const ExtractCommand &c = *e.extract;
  stage.name = "data";
  const Dataset data = c.data.load();
  stage.name = "extract";
  const Dataset feats = extract_features(bundle, data);
  log.line("features: " + std::to_string(feats.height()) + "x" + std::to_string(feats.width()) +
           "x" + std::to_string(feats.channels()));
  stage.name = "write";
  write_features(feats, e.output_dir / c.output);
  return {{"samples", feats.size()},
          {"shape", {feats.height(), feats.width(), feats.channels()}}};
}

json run_perturb(const Experiment &e, const WeightBundle &bundle, Stage &stage, RunLog &log) {
  const PerturbCommand &c = *e.perturb;
  stage.name = "data";
  PerturbSpec spec = c.spec;
  spec.calibration_data = c.calibration.load();
  if (c.slack)
    spec.target_accuracy = 1.0 / spec.calibration_data.num_classes + *c.slack;

  stage.name = "perturb";
  const double before = accuracy(bundle, spec.calibration_data);
  const PerturbResult r = perturb(bundle, spec);
  for (const auto &a : r.attempts)
    log.line("sigma=" + num(a.sigma) + " accuracy=" + num(a.accuracy));

  stage.name = "write";
  save_bundle(r.bundle, e.output_dir / c.output);
  json attempts = json::array();
  for (const auto &a : r.attempts)
    attempts.push_back({{"sigma", a.sigma}, {"accuracy", a.accuracy}});
  const json record{{"sigma", r.sigma},
                    {"accuracy", r.accuracy},
                    {"target_accuracy", spec.target_accuracy},
                    {"original_accuracy", before},
                    {"attempts", attempts}};
  std::ofstream(e.output_dir / "perturb_log.json") << record.dump(2) << '\n';
  return {{"sigma", r.sigma}, {"accuracy", r.accuracy}};
}

json run_consistency(const Experiment &e, Stage &stage, RunLog &log) {
  const ConsistencyCommand &c = *e.consistency;
  stage.name = "consistency";
  std::vector<ConsistencyRow> rows;
  for (const Seed s : c.seeds) {
    ConsistencyConfig cfg = c.harness;
    cfg.seed = s;
    for (const auto &r : consistency_check(cfg)) {
      log.line("seed=" + std::to_string(s) + " n=" + std::to_string(r.n) +
               " ks=" + num(r.ks_distance));
      rows.push_back(r);
    }
  }
  stage.name = "write";
  write_consistency_csv(rows, e.output_dir / "consistency.csv");
  return {{"rows", rows.size()}};
}

int run(const std::string &command, const fs::path &config, bool verbose, bool check_only) {
  Stage stage;
  Experiment e;
  WeightBundle bundle;
  try {
    e = load_experiment(command, config);
    // A bundle the command cannot use is a configuration problem, not a
    // runtime failure, so it is checked before any work starts.
    if (e.extract || e.perturb) {
      stage.name = "bundle";
      bundle = load_any_bundle(e.extract ? e.extract->bundle : e.perturb->bundle);
      bundle.shapes();
      if (e.extract)
        feature_layer_count(bundle);
    }
  } catch (const Error &err) {
    report_error(stage.name, std::string(to_string(err.kind())), err.what());
    return exit_usage;
  }
  if (check_only) {
    std::cout << json{{"command", command}, {"config", "valid"}}.dump() << '\n';
    return 0;
  }

  try {
    stage.name = "output";
    fs::create_directories(e.output_dir);
    RunLog log(e.output_dir / "run.log", verbose);
    log.line("start " + command + " --config " + fs::absolute(config).string());
    json result;
    if (command == "train")
      result = run_train(e, stage, log);
    else if (command == "bootstrap")
      result = run_bootstrap_cmd(e, stage, log);
    else if (command == "extract")
      result = run_extract(e, bundle, stage, log);
    else if (command == "perturb")
      result = run_perturb(e, bundle, stage, log);
    else
      result = run_consistency(e, stage, log);
    log.line("done");
    result["command"] = command;
    result["output_dir"] = e.output_dir.string();
    std::cout << result.dump() << '\n';
    return 0;
  } catch (const Error &err) {
    report_error(stage.name, std::string(to_string(err.kind())), err.what());
  } catch (const std::exception &err) {
    report_error(stage.name, "io-error", err.what());
  }
  return exit_runtime;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Convexified CNN training and warm-start bootstrap prediction intervals"};
  app.require_subcommand(1);
  std::string config;
  bool verbose = false, check_only = false;
  app.add_flag("-v,--verbose", verbose, "Echo progress to stderr");
  const std::vector<std::pair<const char *, const char *>> commands{
      {"train", "Fit a CCNN; writes params.ccna and trace.csv"},
      {"bootstrap", "Warm-start bootstrap; writes cube, intervals, histograms and summary"},
      {"extract", "Last-conv-block features of a pretrained network"},
      {"perturb", "Noise a network's weights down to near-chance accuracy"},
      {"consistency", "Bootstrap-consistency KS harness on synthetic data"},
  };
  for (const auto &[name, help] : commands) {
    CLI::App *sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "Experiment config (JSON)")->required();
    sub->add_flag("--check", check_only, "Validate the config and its inputs, then exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    report_error("usage", "invalid-config", e.what());
    return exit_usage;
  }
  return run(app.get_subcommands().front()->get_name(), config, verbose, check_only);
}
