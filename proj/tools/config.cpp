#include "config.hpp"

#include <fstream>

#include "ccnn/error.hpp"

namespace ccnn::cli {
namespace {

[[noreturn]] void bad(const std::string &where, const std::string &what) {
  fail(ErrorKind::invalid_config, where + ": " + what);
}

/// Thin cursor over one JSON object that remembers its dotted path for
/// error messages.
class Node {
public:
  Node(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      bad(path_, "expected an object");
  }

  bool has(const char *key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string at(const char *key) const { return path_.empty() ? key : path_ + "." + key; }

  Node child(const char *key) const {
    if (!has(key))
      bad(at(key), "missing");
    return {j_.at(key), at(key)};
  }
  std::optional<Node> maybe_child(const char *key) const {
    if (!has(key))
      return std::nullopt;
    return child(key);
  }
  const json &raw(const char *key) const {
    if (!has(key))
      bad(at(key), "missing");
    return j_.at(key);
  }

  template <typename T> T get(const char *key) const {
    try {
      return raw(key).get<T>();
    } catch (const json::exception &) {
      bad(at(key), "wrong type");
    }
  }
  template <typename T> T get(const char *key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  double positive(const char *key) const {
    const double v = get<double>(key);
    if (!(v > 0))
      bad(at(key), "must be positive");
    return v;
  }
  double positive(const char *key, double fallback) const {
    return has(key) ? positive(key) : fallback;
  }
  Index count(const char *key) const {
    const auto v = get<std::int64_t>(key);
    if (v < 1)
      bad(at(key), "must be a positive integer");
    return static_cast<Index>(v);
  }
  Index count(const char *key, Index fallback) const { return has(key) ? count(key) : fallback; }

  /// Seeds are mandatory wherever randomness is involved.
  Seed seed(const char *key = "seed") const {
    if (!has(key))
      bad(at(key), "missing seed (every stochastic stage needs an explicit seed)");
    const json &v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      bad(at(key), "seed must be a non-negative integer");
    return v.get<Seed>();
  }

  const json &self() const { return j_; }
  const std::string &path() const { return path_; }

private:
  const json &j_;
  std::string path_;
};

fs::path resolve(const fs::path &base, const std::string &p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Vector vector_of(const Node &n, const char *key) {
  const auto v = n.get<std::vector<double>>(key);
  if (v.empty())
    bad(n.at(key), "must be non-empty");
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

NoiseKind noise_of(const Node &n) {
  const auto s = n.get<std::string>("noise", "logistic");
  if (s == "logistic")
    return NoiseKind::logistic;
  if (s == "separable-margin")
    return NoiseKind::separable_margin;
  bad(n.at("noise"), "expected logistic or separable-margin");
}

SyntheticSpec synthetic_of(const Node &n, bool needs_seed) {
  SyntheticSpec s;
  s.true_coefficients = vector_of(n, "coefficients");
  s.input_dim = n.count("input_dim", s.true_coefficients.size());
  if (s.input_dim != s.true_coefficients.size())
    bad(n.at("coefficients"), "length must equal input_dim");
  s.noise = noise_of(n);
  s.margin_width = n.get<double>("margin", 0.0);
  if (s.margin_width < 0)
    bad(n.at("margin"), "must be nonnegative");
  if (needs_seed)
    s.seed = n.seed();
  return s;
}

DataSource data_of(const Node &n, const fs::path &base) {
  DataSource d;
  const auto format = n.get<std::string>("format", "idx");
  if (format == "idx") {
    d.format = DataSource::Format::idx;
    d.images = resolve(base, n.get<std::string>("images"));
    d.labels = resolve(base, n.get<std::string>("labels"));
  } else if (format == "features") {
    d.format = DataSource::Format::features;
    d.path = resolve(base, n.get<std::string>("path"));
  } else if (format == "synthetic") {
    d.format = DataSource::Format::synthetic;
    d.synthetic = synthetic_of(n, true);
    d.synthetic_n = n.count("n");
  } else {
    bad(n.at("format"), "expected idx, features or synthetic");
  }
  if (n.has("num_classes")) {
    const int k = n.get<int>("num_classes");
    if (k < 2)
      bad(n.at("num_classes"), "must be at least 2");
    d.num_classes = k;
  }
  if (n.has("limit"))
    d.limit = n.count("limit");
  return d;
}

PatchConfig patch_of(const Node &root) {
  PatchConfig p;
  if (const auto n = root.maybe_child("patch")) {
    p.patch_size = n->count("size");
    p.stride = n->count("stride", p.patch_size);
  }
  return p;
}

ModelSection model_of(const Node &root, const fs::path &base) {
  ModelSection m;
  m.patch = patch_of(root);
  if (const auto k = root.maybe_child("kernel")) {
    KernelSection ks;
    ks.gamma = k->positive("gamma");
    ks.anchors = k->count("anchors");
    ks.seed = k->seed();
    if (const auto s = k->maybe_child("secondary"))
      ks.secondary = data_of(*s, base);
    m.kernel = ks;
  }
  return m;
}

TrainerConfig trainer_of(const Node &n) {
  TrainerConfig t;
  const auto mode = n.get<std::string>("mode");
  if (mode == "constrained")
    t.mode = ConstrainedMode{n.positive("radius")};
  else if (mode == "penalized")
    t.mode = PenalizedMode{n.positive("lambda"), n.positive("mu")};
  else
    bad(n.at("mode"), "expected constrained or penalized");
  t.step_size = n.positive("step_size");
  t.batch_size = n.count("batch_size");
  t.iterations = n.has("iterations") ? n.get<std::int64_t>("iterations") : 1;
  if (t.iterations < 0)
    bad(n.at("iterations"), "must be nonnegative");
  const auto unit = n.get<std::string>("unit", "epoch");
  if (unit == "epoch")
    t.unit = IterationUnit::epoch;
  else if (unit == "step")
    t.unit = IterationUnit::step;
  else
    bad(n.at("unit"), "expected epoch or step");
  t.step_decay = n.get<double>("step_decay", 1.0);
  if (!(t.step_decay > 0 && t.step_decay <= 1))
    bad(n.at("step_decay"), "must lie in (0, 1]");
  t.seed = n.seed();
  return t;
}

ChainMode chain_of(const Node &n) {
  const auto s = n.get<std::string>("chain", "warm-chain");
  if (s == "warm-chain")
    return ChainMode::warm_chain;
  if (s == "parallel-from-base")
    return ChainMode::parallel_from_base;
  bad(n.at("chain"), "expected warm-chain or parallel-from-base");
}

double alpha_of(const Node &n) {
  const double a = n.get<double>("alpha", 0.05);
  if (!(a > 0 && a < 1))
    bad(n.at("alpha"), "must lie in (0, 1)");
  return a;
}

void require_files(const std::vector<fs::path> &files) {
  for (const auto &f : files)
    require(fs::is_regular_file(f), ErrorKind::missing_input, "no such file: " + f.string());
}

json read_json(const fs::path &path) {
  require(fs::is_regular_file(path), ErrorKind::missing_input,
          "no such config file: " + path.string());
  std::ifstream in(path);
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error &e) {
    bad(path.string(), std::string("not valid JSON: ") + e.what());
  }
}

} // namespace

std::vector<fs::path> DataSource::files() const {
  switch (format) {
  case Format::idx:
    return {images, labels};
  case Format::features:
    return {path};
  case Format::synthetic:
    break;
  }
  return {};
}

Dataset DataSource::load() const {
  Dataset d;
  switch (format) {
  case Format::idx:
    d = load_idx(images, labels, num_classes);
    break;
  case Format::features:
    d = load_features(path);
    break;
  case Format::synthetic:
    d = generate_synthetic(synthetic, synthetic_n);
    break;
  }
  if (num_classes && format != Format::idx)
    d.num_classes = *num_classes;
  if (limit && *limit < d.size())
    d.samples.resize(static_cast<std::size_t>(*limit));
  d.validate();
  return d;
}

Experiment load_experiment(const std::string &command, const fs::path &config_path) {
  Experiment e;
  e.command = command;
  e.config_path = config_path;
  e.raw = read_json(config_path);
  const fs::path base = config_path.parent_path();
  const Node root(e.raw, "");
  e.output_dir = resolve(base, root.get<std::string>("output_dir"));

  std::vector<fs::path> inputs;
  auto add_inputs = [&](const DataSource &d) {
    const auto f = d.files();
    inputs.insert(inputs.end(), f.begin(), f.end());
  };

  if (command == "train") {
    TrainCommand c;
    c.train = data_of(root.child("data").child("train"), base);
    c.model = model_of(root, base);
    c.trainer = trainer_of(root.child("trainer"));
    add_inputs(c.train);
    if (c.model.kernel && c.model.kernel->secondary)
      add_inputs(*c.model.kernel->secondary);
    e.train = c;
  } else if (command == "bootstrap") {
    BootstrapCommand c;
    const Node data = root.child("data");
    c.train = data_of(data.child("train"), base);
    c.test = data_of(data.child("test"), base);
    c.model = model_of(root, base);
    const Node b = root.child("bootstrap");
    c.bootstrap.num_bootstraps = b.count("replicates");
    c.bootstrap.alpha = alpha_of(b);
    c.bootstrap.chain = chain_of(b);
    c.bootstrap.seed = b.seed();
    // Replicate settings are a patch over the base trainer, so only the
    // differences (typically the iteration budget) need to be spelled out.
    const json &base_trainer = root.raw("trainer");
    c.bootstrap.base_trainer = trainer_of(Node(base_trainer, "trainer"));
    json replicate = base_trainer;
    if (b.has("trainer"))
      replicate.merge_patch(b.raw("trainer"));
    c.bootstrap.trainer = trainer_of(Node(replicate, "bootstrap.trainer"));
    c.histograms = b.get<bool>("histograms", true);
    add_inputs(c.train);
    add_inputs(c.test);
    if (c.model.kernel && c.model.kernel->secondary)
      add_inputs(*c.model.kernel->secondary);
    e.bootstrap = c;
  } else if (command == "extract") {
    const Node x = root.child("extract");
    ExtractCommand c;
    c.bundle = resolve(base, x.get<std::string>("bundle"));
    c.data = data_of(x.child("data"), base);
    c.output = x.get<std::string>("output", c.output);
    inputs.push_back(c.bundle);
    add_inputs(c.data);
    e.extract = c;
  } else if (command == "perturb") {
    const Node x = root.child("perturb");
    PerturbCommand c;
    c.bundle = resolve(base, x.get<std::string>("bundle"));
    c.calibration = data_of(x.child("calibration"), base);
    c.spec.sigma = x.positive("sigma");
    if (x.has("target_accuracy") == x.has("slack"))
      bad(x.path(), "give exactly one of target_accuracy and slack");
    if (x.has("target_accuracy")) {
      c.spec.target_accuracy = x.positive("target_accuracy");
      if (c.spec.target_accuracy > 1)
        bad(x.at("target_accuracy"), "must lie in (0, 1]");
    } else {
      c.slack = x.get<double>("slack");
    }
    c.spec.seed = x.seed();
    c.spec.max_retries = x.count("max_retries", c.spec.max_retries);
    c.output = x.get<std::string>("output", c.output);
    inputs.push_back(c.bundle);
    add_inputs(c.calibration);
    e.perturb = c;
  } else if (command == "consistency") {
    const Node x = root.child("consistency");
    ConsistencyCommand c;
    c.harness.spec = synthetic_of(x, false);
    for (const auto n : x.get<std::vector<std::int64_t>>("n_grid")) {
      if (n < 2)
        bad(x.at("n_grid"), "sample sizes must be at least 2");
      c.harness.n_grid.push_back(static_cast<Index>(n));
    }
    if (c.harness.n_grid.empty())
      bad(x.at("n_grid"), "must be non-empty");
    c.harness.mc_reps = x.count("mc_reps");
    c.harness.bootstraps = x.count("bootstraps");
    c.harness.trainer = trainer_of(x.child("trainer"));
    c.harness.probe = vector_of(x, "probe");
    if (c.harness.probe.size() != c.harness.spec.input_dim)
      bad(x.at("probe"), "length must equal input_dim");
    c.harness.reference_size = x.has("reference_size") ? x.count("reference_size") : 0;
    if (!x.has("seeds"))
      bad(x.at("seeds"), "missing seed list (every stochastic stage needs an explicit seed)");
    for (std::size_t i = 0; i < x.raw("seeds").size(); ++i) {
      const json &s = x.raw("seeds")[i];
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0)
        bad(x.at("seeds"), "seeds must be non-negative integers");
      c.seeds.push_back(s.get<Seed>());
    }
    if (c.seeds.empty())
      bad(x.at("seeds"), "must be non-empty");
    e.consistency = c;
  } else {
    bad("command", "unknown command " + command);
  }

  require_files(inputs);
  return e;
}

} // namespace ccnn::cli
