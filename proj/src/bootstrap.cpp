#include "ccnn/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "ccnn/data_io.hpp"
#include "ccnn/error.hpp"
#include "ccnn/rng.hpp"
#include "text_format.hpp"

namespace ccnn {

void BootstrapConfig::validate() const {
  require(num_bootstraps >= 2, ErrorKind::invalid_argument, "need at least two bootstraps");
  require(alpha > 0 && alpha < 1, ErrorKind::bad_alpha, "alpha must lie in (0, 1)");
  base_trainer.validate();
  trainer.validate();
}

Vector PredictionCube::column(Index i, Index k) const {
  Vector v(bootstraps_);
  for (Index b = 0; b < bootstraps_; ++b)
    v(b) = (*this)(b, i, k);
  return v;
}

Matrix PredictionCube::slice(Index b) const {
  Matrix m(samples_, classes_);
  for (Index i = 0; i < samples_; ++i)
    for (Index k = 0; k < classes_; ++k)
      m(i, k) = (*this)(b, i, k);
  return m;
}

void PredictionCube::set_slice(Index b, const Matrix &probs) {
  require(probs.rows() == samples_ && probs.cols() == classes_, ErrorKind::shape_mismatch,
          "slice shape does not match the cube");
  for (Index i = 0; i < samples_; ++i)
    for (Index k = 0; k < classes_; ++k)
      (*this)(b, i, k) = probs(i, k);
}

Matrix PredictionCube::mean() const {
  Matrix m = Matrix::Zero(samples_, classes_);
  for (Index b = 0; b < bootstraps_; ++b)
    m += slice(b);
  return m / static_cast<double>(bootstraps_);
}

BootstrapResult run_bootstrap(const PatchedDataset &train, const PatchedDataset &test,
                              const BootstrapConfig &cfg, const ProgressFn &progress) {
  cfg.validate();
  require(train.size() > 0 && test.size() > 0, ErrorKind::empty_dataset,
          "train and test sets must be non-empty");
  require(train.patch_dim == test.patch_dim && train.patch_count == test.patch_count &&
              train.num_classes == test.num_classes,
          ErrorKind::shape_mismatch, "train and test patch shapes differ");

  BootstrapResult result;
  try {
    result.base = fit(train, cfg.base_trainer).params;
  } catch (const Error &e) {
    throw Error(e.kind(), std::string("base fit: ") + e.what());
  }

  const Index n = train.size();
  const Index replicates = cfg.num_bootstraps;
  result.cube = PredictionCube(replicates, test.size(), test.num_classes);
  result.digests.reserve(static_cast<std::size_t>(replicates));

  CcnnParams previous = result.base;
  for (Index b = 1; b <= replicates; ++b) {
    const auto rows = bootstrap_indices(n, n, derive_seed(cfg.seed, 2 * b));
    const PatchedDataset resampled = select(train, rows);
    TrainerConfig trainer = cfg.trainer;
    trainer.seed = derive_seed(cfg.seed, 2 * b + 1);
    const CcnnParams &init = cfg.chain == ChainMode::warm_chain ? previous : result.base;
    CcnnParams fitted;
    try {
      fitted = fit(resampled, trainer, init).params;
    } catch (const Error &e) {
      throw Error(e.kind(), "bootstrap " + std::to_string(b) + ": " + e.what());
    }
    result.cube.set_slice(b - 1, softmax_rows(scores(fitted, test)));
    result.digests.push_back(digest(fitted));
    previous = std::move(fitted);
    if (progress)
      progress(b, replicates);
  }
  return result;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::empty_dataset, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size())
    return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

IntervalTable intervals(const PredictionCube &cube, double alpha) {
  require(alpha > 0 && alpha < 1, ErrorKind::bad_alpha, "alpha must lie in (0, 1)");
  require(cube.bootstraps() >= 2, ErrorKind::invalid_argument,
          "intervals need at least two bootstraps");
  IntervalTable table;
  table.alpha = alpha;
  table.lower.resize(cube.samples(), cube.classes());
  table.upper.resize(cube.samples(), cube.classes());
  for (Index i = 0; i < cube.samples(); ++i) {
    for (Index k = 0; k < cube.classes(); ++k) {
      const Vector col = cube.column(i, k);
      std::vector<double> values(col.data(), col.data() + col.size());
      table.lower(i, k) = quantile(values, alpha / 2);
      table.upper(i, k) = quantile(std::move(values), 1 - alpha / 2);
    }
  }
  return table;
}

std::vector<IntervalRecord> interval_report(const IntervalTable &table,
                                            const PredictionCube &cube,
                                            const std::vector<int> &labels) {
  require(table.lower.rows() == cube.samples() &&
              static_cast<Index>(labels.size()) == cube.samples() &&
              table.lower.cols() == cube.classes(),
          ErrorKind::size_mismatch, "interval table, cube, and labels disagree in size");
  const Matrix mean = cube.mean();
  std::vector<IntervalRecord> records;
  records.reserve(static_cast<std::size_t>(cube.samples() * cube.classes()));
  for (Index i = 0; i < cube.samples(); ++i) {
    Index predicted = 0;
    mean.row(i).maxCoeff(&predicted);
    for (Index k = 0; k < cube.classes(); ++k) {
      IntervalRecord r;
      r.sample_index = i;
      r.true_label = labels[static_cast<std::size_t>(i)];
      r.predicted_class = static_cast<int>(predicted);
      r.class_index = static_cast<int>(k);
      r.lower = table.lower(i, k);
      r.upper = table.upper(i, k);
      r.width = r.upper - r.lower;
      records.push_back(r);
    }
  }
  return records;
}

void write_interval_csv(const std::vector<IntervalRecord> &records, double alpha,
                        const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io_error, "cannot write " + path.string());
  out << "# alpha=" << detail::format_double(alpha) << '\n';
  out << "sampleIndex,trueLabel,predictedClass,class,lower,upper,width\n";
  for (const auto &r : records)
    out << r.sample_index << ',' << r.true_label << ',' << r.predicted_class << ','
        << r.class_index << ',' << detail::format_double(r.lower) << ','
        << detail::format_double(r.upper) << ',' << detail::format_double(r.width) << '\n';
}

IntervalCsv read_interval_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::missing_input, "cannot open " + path.string());
  IntervalCsv csv;
  std::string line;
  std::getline(in, line);
  if (line.rfind("# alpha=", 0) != 0)
    fail(ErrorKind::bad_header, path.string() + ": missing alpha line");
  csv.alpha = std::stod(line.substr(8));
  std::getline(in, line);
  if (line != "sampleIndex,trueLabel,predictedClass,class,lower,upper,width")
    fail(ErrorKind::bad_header, path.string() + ": unexpected column header");
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ','))
      f.push_back(field);
    if (f.size() != 7)
      fail(ErrorKind::bad_header, path.string() + ": malformed row \"" + line + "\"");
    IntervalRecord r;
    r.sample_index = std::stoll(f[0]);
    r.true_label = std::stoi(f[1]);
    r.predicted_class = std::stoi(f[2]);
    r.class_index = std::stoi(f[3]);
    r.lower = std::stod(f[4]);
    r.upper = std::stod(f[5]);
    r.width = std::stod(f[6]);
    csv.records.push_back(r);
  }
  return csv;
}

void save_cube(const PredictionCube &cube, const std::filesystem::path &path) {
  detail::ByteWriter out;
  out.magic("CCNP");
  out.u32_le(1);
  out.u32_le(static_cast<std::uint32_t>(cube.bootstraps()));
  out.u32_le(static_cast<std::uint32_t>(cube.samples()));
  out.u32_le(static_cast<std::uint32_t>(cube.classes()));
  for (double v : cube.values())
    out.f32_le(static_cast<float>(v));
  out.save(path);
}

PredictionCube load_cube(const std::filesystem::path &path) {
  detail::ByteReader in(path);
  in.expect_magic("CCNP");
  if (in.u32_le() != 1)
    fail(ErrorKind::bad_header, path.string() + ": unsupported cube version");
  const Index b = in.u32_le();
  const Index n = in.u32_le();
  const Index d2 = in.u32_le();
  in.need(4 * static_cast<std::size_t>(b * n * d2));
  PredictionCube cube(b, n, d2);
  for (Index r = 0; r < b; ++r)
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < d2; ++k)
        cube(r, i, k) = in.f32_le();
  return cube;
}

PredictionCube quantize_to_float(const PredictionCube &cube) {
  PredictionCube out = cube;
  for (Index b = 0; b < cube.bootstraps(); ++b)
    for (Index i = 0; i < cube.samples(); ++i)
      for (Index k = 0; k < cube.classes(); ++k)
        out(b, i, k) = static_cast<float>(cube(b, i, k));
  return out;
}

void write_histogram_csv(const PredictionCube &cube, Index sample,
                         const std::filesystem::path &path) {
  require(sample >= 0 && sample < cube.samples(), ErrorKind::size_mismatch,
          "sample index out of range");
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io_error, "cannot write " + path.string());
  out << "bootstrap";
  for (Index k = 0; k < cube.classes(); ++k)
    out << ",class_" << k;
  out << '\n';
  for (Index b = 0; b < cube.bootstraps(); ++b) {
    out << b + 1;
    for (Index k = 0; k < cube.classes(); ++k)
      out << ',' << detail::format_double(cube(b, sample, k));
    out << '\n';
  }
}

} // namespace ccnn
