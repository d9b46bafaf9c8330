#include "ccnn/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "ccnn/error.hpp"

namespace ccnn {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::uint32_t kFeatureVersion = 1;

} // namespace

double logistic(double z) {
  if (z >= 0)
    return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto &s : samples)
    out.push_back(s.label);
  return out;
}

void Dataset::validate() const {
  require(!samples.empty(), ErrorKind::empty_dataset, "dataset has no samples");
  require(num_classes > 0, ErrorKind::invalid_argument, "num_classes must be positive");
  const Sample &first = samples.front();
  for (const auto &s : samples) {
    require(s.height == first.height && s.width == first.width &&
                s.channels == first.channels &&
                s.pixels.size() == s.height * s.width * s.channels,
            ErrorKind::shape_mismatch, "samples disagree in shape");
    require(s.label >= 0 && s.label < num_classes, ErrorKind::bad_label,
            "label " + std::to_string(s.label) + " outside [0, " +
                std::to_string(num_classes) + ")");
  }
}

Dataset select(const Dataset &data, const std::vector<Index> &indices) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.source = data.source;
  out.samples.reserve(indices.size());
  for (Index i : indices)
    out.samples.push_back(data.samples.at(static_cast<std::size_t>(i)));
  return out;
}

Dataset load_idx(const std::filesystem::path &image_path,
                 const std::filesystem::path &label_path,
                 std::optional<int> num_classes) {
  detail::ByteReader images(image_path);
  detail::ByteReader labels(label_path);

  if (images.u32_be() != kIdxImageMagic)
    fail(ErrorKind::malformed_magic, image_path.string() + ": not an IDX image file");
  if (labels.u32_be() != kIdxLabelMagic)
    fail(ErrorKind::malformed_magic, label_path.string() + ": not an IDX label file");

  const std::uint32_t n = images.u32_be();
  const std::uint32_t rows = images.u32_be();
  const std::uint32_t cols = images.u32_be();
  const std::uint32_t n_labels = labels.u32_be();
  if (n != n_labels)
    fail(ErrorKind::count_mismatch, std::to_string(n) + " images but " +
                                        std::to_string(n_labels) + " labels");
  images.need(static_cast<std::size_t>(n) * rows * cols);
  labels.need(n);

  Dataset data;
  data.source = SourceKind::raw_image;
  data.samples.resize(n);
  int max_label = 0;
  for (auto &s : data.samples) {
    s.height = rows;
    s.width = cols;
    s.channels = 1;
    s.pixels.resize(static_cast<Index>(rows) * cols);
    for (Index k = 0; k < s.pixels.size(); ++k)
      s.pixels(k) = images.byte() / 255.0;
    s.label = labels.byte();
    max_label = std::max(max_label, s.label);
  }
  data.num_classes = num_classes.value_or(max_label + 1);
  data.validate();
  return data;
}

void write_idx(const Dataset &data, const std::filesystem::path &image_path,
               const std::filesystem::path &label_path) {
  data.validate();
  require(data.channels() == 1, ErrorKind::shape_mismatch,
          "IDX images must be single-channel");
  detail::ByteWriter images;
  detail::ByteWriter labels;
  images.u32_be(kIdxImageMagic);
  images.u32_be(static_cast<std::uint32_t>(data.size()));
  images.u32_be(static_cast<std::uint32_t>(data.height()));
  images.u32_be(static_cast<std::uint32_t>(data.width()));
  labels.u32_be(kIdxLabelMagic);
  labels.u32_be(static_cast<std::uint32_t>(data.size()));
  for (const auto &s : data.samples) {
    for (Index k = 0; k < s.pixels.size(); ++k)
      images.byte(static_cast<unsigned char>(
          std::clamp(std::lround(s.pixels(k) * 255.0), 0L, 255L)));
    labels.byte(static_cast<unsigned char>(s.label));
  }
  images.save(image_path);
  labels.save(label_path);
}

Dataset load_features(const std::filesystem::path &path) {
  detail::ByteReader in(path);
  in.expect_magic("CCNF");
  if (in.u32_le() != kFeatureVersion)
    fail(ErrorKind::bad_header, path.string() + ": unsupported FeatureBundle version");
  const std::uint32_t n = in.u32_le();
  const std::uint32_t h = in.u32_le();
  const std::uint32_t w = in.u32_le();
  const std::uint32_t c = in.u32_le();
  const std::uint32_t d2 = in.u32_le();
  if (n == 0 || h == 0 || w == 0 || c == 0 || d2 == 0)
    fail(ErrorKind::bad_header, path.string() + ": zero dimension in header");

  const std::size_t per_sample = static_cast<std::size_t>(h) * w * c;
  in.need(4 * static_cast<std::size_t>(n) + 4 * per_sample * n);

  Dataset data;
  data.source = SourceKind::extracted_feature;
  data.num_classes = static_cast<int>(d2);
  data.samples.resize(n);
  for (auto &s : data.samples) {
    s.label = static_cast<int>(in.u32_le());
    s.height = h;
    s.width = w;
    s.channels = c;
  }
  for (auto &s : data.samples) {
    s.pixels.resize(static_cast<Index>(per_sample));
    for (Index k = 0; k < s.pixels.size(); ++k)
      s.pixels(k) = in.f32_le();
  }
  if (in.remaining() != 0)
    fail(ErrorKind::shape_mismatch,
         path.string() + ": payload larger than the header declares");
  data.validate();
  return data;
}

void write_features(const Dataset &data, const std::filesystem::path &path) {
  data.validate();
  detail::ByteWriter out;
  out.magic("CCNF");
  out.u32_le(kFeatureVersion);
  out.u32_le(static_cast<std::uint32_t>(data.size()));
  out.u32_le(static_cast<std::uint32_t>(data.height()));
  out.u32_le(static_cast<std::uint32_t>(data.width()));
  out.u32_le(static_cast<std::uint32_t>(data.channels()));
  out.u32_le(static_cast<std::uint32_t>(data.num_classes));
  for (const auto &s : data.samples)
    out.u32_le(static_cast<std::uint32_t>(s.label));
  for (const auto &s : data.samples)
    for (Index k = 0; k < s.pixels.size(); ++k)
      out.f32_le(static_cast<float>(s.pixels(k)));
  out.save(path);
}

std::vector<Index> bootstrap_indices(Index n, Index size, Seed seed) {
  require(n > 0, ErrorKind::empty_dataset, "cannot resample an empty dataset");
  require(size > 0, ErrorKind::invalid_argument, "resample size must be positive");
  Rng rng(seed);
  std::vector<Index> idx(static_cast<std::size_t>(size));
  for (auto &i : idx)
    i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  return idx;
}

Dataset resample(const Dataset &data, Index size, Seed seed) {
  return select(data, bootstrap_indices(data.size(), size, seed));
}

Dataset generate_synthetic(const SyntheticSpec &spec, Index n) {
  require(n >= 1, ErrorKind::invalid_argument, "n must be at least 1");
  require(spec.input_dim >= 1 && spec.true_coefficients.size() == spec.input_dim,
          ErrorKind::shape_mismatch, "true_coefficients length must equal input_dim");
  require(spec.margin_width >= 0, ErrorKind::invalid_argument,
          "margin_width must be nonnegative");

  constexpr std::uint64_t kMaxDrawsPerSample = 1'000'000;
  constexpr double kMinAcceptance = 1e-3;

  Rng rng(spec.seed);
  Dataset data;
  data.num_classes = 2;
  data.source = SourceKind::synthetic;
  data.samples.reserve(static_cast<std::size_t>(n));

  std::uint64_t draws = 0;
  for (Index i = 0; i < n; ++i) {
    Sample s{1, 1, spec.input_dim, Vector(), 0};
    if (spec.noise == NoiseKind::logistic) {
      s.pixels = rng.normal_vector(spec.input_dim);
      const double p = logistic(spec.true_coefficients.dot(s.pixels));
      s.label = rng.uniform() < p ? 1 : 0;
    } else {
      std::uint64_t tries = 0;
      double margin = 0;
      do {
        if (++tries > kMaxDrawsPerSample)
          fail(ErrorKind::rejection_exhausted,
               "no sample cleared the margin after 10^6 draws");
        ++draws;
        s.pixels = rng.normal_vector(spec.input_dim);
        margin = spec.true_coefficients.dot(s.pixels);
      } while (std::abs(margin) < spec.margin_width);
      s.label = margin > 0 ? 1 : 0;
      if (draws >= 1000 &&
          static_cast<double>(i + 1) / static_cast<double>(draws) < kMinAcceptance)
        fail(ErrorKind::rejection_exhausted, "margin acceptance rate below 1e-3");
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

} // namespace ccnn
