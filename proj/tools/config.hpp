#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccnn/bootstrap.hpp"
#include "ccnn/data_io.hpp"
#include "ccnn/extractor.hpp"
#include "ccnn/kernelizer.hpp"
#include "ccnn/metrics.hpp"
#include "ccnn/patching.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Where a dataset comes from. Paths are already resolved against the
/// config file's directory.
struct DataSource {
  enum class Format { idx, features, synthetic } format = Format::idx;
  fs::path images, labels, path;
  std::optional<int> num_classes;
  std::optional<Index> limit; ///< keep the first `limit` samples
  SyntheticSpec synthetic;
  Index synthetic_n = 0;

  std::vector<fs::path> files() const;
  Dataset load() const;
};

struct KernelSection {
  double gamma = 1.0;
  Index anchors = 64;
  Seed seed = 0;
  std::optional<DataSource> secondary;
};

struct ModelSection {
  PatchConfig patch;
  std::optional<KernelSection> kernel;
};

struct TrainCommand {
  DataSource train;
  ModelSection model;
  TrainerConfig trainer;
};

struct BootstrapCommand {
  DataSource train, test;
  ModelSection model;
  BootstrapConfig bootstrap;
  bool histograms = true;
};

struct ExtractCommand {
  fs::path bundle;
  DataSource data;
  std::string output = "features.ccnf";
};

struct PerturbCommand {
  fs::path bundle;
  DataSource calibration;
  PerturbSpec spec; ///< calibration_data filled in at run time
  std::optional<double> slack; ///< target = 1/d2 + slack when set
  std::string output = "perturbed.ccnw";
};

struct ConsistencyCommand {
  ConsistencyConfig harness; ///< seed overwritten per entry of `seeds`
  std::vector<Seed> seeds;
};

/// Parsed experiment document for one command.
struct Experiment {
  std::string command;
  fs::path config_path;
  fs::path output_dir;
  json raw;

  std::optional<TrainCommand> train;
  std::optional<BootstrapCommand> bootstrap;
  std::optional<ExtractCommand> extract;
  std::optional<PerturbCommand> perturb;
  std::optional<ConsistencyCommand> consistency;
};

/// Reads and validates the config for `command`. Every failure is an Error of
/// kind invalid_config, missing_input, or one raised by structural checks
/// (e.g. no_conv_layer); all of them mean "fix the config".
Experiment load_experiment(const std::string &command, const fs::path &config_path);

} // namespace ccnn::cli
