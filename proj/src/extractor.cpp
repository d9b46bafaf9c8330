#include "ccnn/extractor.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"
#include "ccnn/error.hpp"
#include "ccnn/rng.hpp"

namespace ccnn {

namespace {

enum LayerTag : std::uint32_t {
  kConv = 1,
  kRelu = 2,
  kMaxPool = 3,
  kFlatten = 4,
  kDense = 5,
  kSoftmax = 6,
};

template <class... Ts> struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts> Overloaded(Ts...) -> Overloaded<Ts...>;

Shape3 next_shape(const Shape3 &in, const Layer &layer, std::size_t position) {
  const std::string where = "layer " + std::to_string(position) + ": ";
  return std::visit(
      Overloaded{
          [&](const ConvLayer &c) {
            require(c.kernel_h >= 1 && c.kernel_w >= 1 && c.stride >= 1 && c.out_channels >= 1,
                    ErrorKind::shape_mismatch, where + "conv dimensions must be positive");
            require(c.in_channels == in.channels, ErrorKind::shape_mismatch,
                    where + "conv expects " + std::to_string(c.in_channels) +
                        " input channels, got " + std::to_string(in.channels));
            require(c.kernel_h <= in.height && c.kernel_w <= in.width,
                    ErrorKind::shape_mismatch, where + "conv kernel larger than its input");
            require(c.weights.size() == c.kernel_h * c.kernel_w * c.in_channels * c.out_channels &&
                        c.bias.size() == c.out_channels,
                    ErrorKind::shape_mismatch, where + "conv weight count does not match shape");
            require(c.weights.allFinite() && c.bias.allFinite(), ErrorKind::non_finite_input,
                    where + "non-finite conv weights");
            return Shape3{(in.height - c.kernel_h) / c.stride + 1,
                          (in.width - c.kernel_w) / c.stride + 1, c.out_channels};
          },
          [&](const ReluLayer &) { return in; },
          [&](const MaxPoolLayer &p) {
            require(p.size >= 1 && p.stride >= 1, ErrorKind::shape_mismatch,
                    where + "pool dimensions must be positive");
            require(p.size <= in.height && p.size <= in.width, ErrorKind::shape_mismatch,
                    where + "pool window larger than its input");
            return Shape3{(in.height - p.size) / p.stride + 1, (in.width - p.size) / p.stride + 1,
                          in.channels};
          },
          [&](const FlattenLayer &) { return Shape3{1, 1, in.size()}; },
          [&](const DenseLayer &d) {
            require(d.in == in.size(), ErrorKind::shape_mismatch,
                    where + "dense expects " + std::to_string(d.in) + " inputs, got " +
                        std::to_string(in.size()));
            require(d.out >= 1 && d.weights.size() == d.in * d.out && d.bias.size() == d.out,
                    ErrorKind::shape_mismatch, where + "dense weight count does not match shape");
            require(d.weights.allFinite() && d.bias.allFinite(), ErrorKind::non_finite_input,
                    where + "non-finite dense weights");
            return Shape3{1, 1, d.out};
          },
          [&](const SoftmaxLayer &) { return in; },
      },
      layer);
}

Activation apply(const Activation &x, const Layer &layer, const Shape3 &out_shape) {
  Activation y{out_shape, Vector::Zero(out_shape.size())};
  std::visit(
      Overloaded{
          [&](const ConvLayer &c) {
            const Shape3 &s = x.shape;
            for (Index r = 0; r < out_shape.height; ++r)
              for (Index col = 0; col < out_shape.width; ++col)
                for (Index o = 0; o < c.out_channels; ++o) {
                  double acc = c.bias(o);
                  for (Index kr = 0; kr < c.kernel_h; ++kr)
                    for (Index kc = 0; kc < c.kernel_w; ++kc) {
                      const Index base =
                          ((r * c.stride + kr) * s.width + col * c.stride + kc) * s.channels;
                      for (Index i = 0; i < c.in_channels; ++i)
                        acc += static_cast<double>(c.weight(kr, kc, i, o)) * x.values(base + i);
                    }
                  y.values((r * out_shape.width + col) * out_shape.channels + o) = acc;
                }
          },
          [&](const ReluLayer &) { y.values = x.values.cwiseMax(0.0); },
          [&](const MaxPoolLayer &p) {
            const Shape3 &s = x.shape;
            for (Index r = 0; r < out_shape.height; ++r)
              for (Index col = 0; col < out_shape.width; ++col)
                for (Index ch = 0; ch < s.channels; ++ch) {
                  double best = -std::numeric_limits<double>::infinity();
                  for (Index kr = 0; kr < p.size; ++kr)
                    for (Index kc = 0; kc < p.size; ++kc)
                      best = std::max(best, x.values(((r * p.stride + kr) * s.width +
                                                      col * p.stride + kc) *
                                                         s.channels +
                                                     ch));
                  y.values((r * out_shape.width + col) * s.channels + ch) = best;
                }
          },
          [&](const FlattenLayer &) { y.values = x.values; },
          [&](const DenseLayer &d) {
            const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>
                w(d.weights.data(), d.in, d.out);
            y.values = w.cast<double>().transpose() * x.values + d.bias.cast<double>();
          },
          [&](const SoftmaxLayer &) {
            const double top = x.values.maxCoeff();
            y.values = (x.values.array() - top).exp().matrix();
            y.values /= y.values.sum();
          },
      },
      layer);
  return y;
}

template <typename Fn> void for_each_parameter_block(WeightBundle &bundle, Fn &&fn) {
  for (auto &layer : bundle.layers) {
    if (auto *c = std::get_if<ConvLayer>(&layer)) {
      fn(c->weights);
      fn(c->bias);
    } else if (auto *d = std::get_if<DenseLayer>(&layer)) {
      fn(d->weights);
      fn(d->bias);
    }
  }
}

Eigen::VectorXf read_raw_f32(const std::filesystem::path &path, Index count) {
  detail::ByteReader in(path);
  Eigen::VectorXf v(count);
  for (Index i = 0; i < count; ++i)
    v(i) = in.f32_le();
  if (in.remaining() != 0)
    fail(ErrorKind::shape_mismatch, path.string() + ": array larger than its declared shape");
  return v;
}

} // namespace

std::vector<Shape3> WeightBundle::shapes() const {
  require(input.height >= 1 && input.width >= 1 && input.channels >= 1,
          ErrorKind::shape_mismatch, "bundle input shape must be positive");
  std::vector<Shape3> out;
  out.reserve(layers.size());
  Shape3 current = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    current = next_shape(current, layers[i], i);
    out.push_back(current);
  }
  return out;
}

Activation forward_prefix(const WeightBundle &bundle, const Sample &sample, Index layer_count) {
  const auto shapes = bundle.shapes();
  require(Shape3{sample.height, sample.width, sample.channels} == bundle.input,
          ErrorKind::shape_mismatch, "sample shape does not match the bundle input");
  Activation x{bundle.input, sample.pixels};
  for (Index i = 0; i < layer_count; ++i) {
    x = apply(x, bundle.layers[static_cast<std::size_t>(i)],
              shapes[static_cast<std::size_t>(i)]);
    require(x.values.allFinite(), ErrorKind::non_finite_activation,
            "non-finite activation after layer " + std::to_string(i));
  }
  return x;
}

Vector forward(const WeightBundle &bundle, const Sample &sample) {
  return forward_prefix(bundle, sample, static_cast<Index>(bundle.layers.size())).values;
}

Index feature_layer_count(const WeightBundle &bundle) {
  Index last_conv = -1;
  for (std::size_t i = 0; i < bundle.layers.size(); ++i)
    if (std::holds_alternative<ConvLayer>(bundle.layers[i]))
      last_conv = static_cast<Index>(i);
  require(last_conv >= 0, ErrorKind::no_conv_layer, "bundle has no convolution layer");
  Index end = last_conv + 1;
  while (end < static_cast<Index>(bundle.layers.size()) &&
         (std::holds_alternative<ReluLayer>(bundle.layers[static_cast<std::size_t>(end)]) ||
          std::holds_alternative<MaxPoolLayer>(bundle.layers[static_cast<std::size_t>(end)])))
    ++end;
  return end;
}

Dataset extract_features(const WeightBundle &bundle, const Dataset &data) {
  const Index depth = feature_layer_count(bundle);
  data.validate();
  Dataset out;
  out.num_classes = data.num_classes;
  out.source = SourceKind::extracted_feature;
  out.samples.reserve(data.samples.size());
  for (const auto &s : data.samples) {
    Activation a = forward_prefix(bundle, s, depth);
    // Features are float-precision by contract (FeatureBundle stores f32), so
    // in-memory and exported features are the same numbers.
    a.values = a.values.cast<float>().cast<double>();
    out.samples.push_back(
        Sample{a.shape.height, a.shape.width, a.shape.channels, std::move(a.values), s.label});
  }
  return out;
}

double accuracy(const WeightBundle &bundle, const Dataset &data) {
  require(!data.empty(), ErrorKind::empty_dataset, "accuracy on an empty dataset");
  Index correct = 0;
  for (const auto &s : data.samples) {
    Index predicted = 0;
    forward(bundle, s).maxCoeff(&predicted);
    correct += predicted == s.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

PerturbResult perturb(const WeightBundle &bundle, const PerturbSpec &spec) {
  require(spec.sigma > 0, ErrorKind::nonpositive_sigma,
          "perturbation sigma must be positive");
  require(spec.target_accuracy > 0 && spec.target_accuracy <= 1, ErrorKind::invalid_argument,
          "target accuracy must lie in (0, 1]");
  require(!spec.calibration_data.empty(), ErrorKind::empty_dataset,
          "perturb needs labeled calibration data");
  bundle.shapes();

  PerturbResult result;
  double sigma = spec.sigma;
  for (Index attempt = 0; attempt <= spec.max_retries; ++attempt) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(attempt)));
    WeightBundle noisy = bundle;
    for_each_parameter_block(noisy, [&](Eigen::VectorXf &w) {
      for (Index i = 0; i < w.size(); ++i)
        w(i) = static_cast<float>(w(i) + sigma * rng.normal());
    });
    const double acc = accuracy(noisy, spec.calibration_data);
    result.attempts.push_back({sigma, acc});
    if (acc <= spec.target_accuracy) {
      result.bundle = std::move(noisy);
      result.sigma = sigma;
      result.accuracy = acc;
      return result;
    }
    sigma *= 2;
  }
  fail(ErrorKind::calibration_failed,
       "accuracy stayed above " + std::to_string(spec.target_accuracy) + " after " +
           std::to_string(spec.max_retries) + " retries");
}

void save_bundle(const WeightBundle &bundle, const std::filesystem::path &path) {
  bundle.shapes();
  detail::ByteWriter out;
  out.magic("CCNW");
  out.u32_le(1);
  out.u32_le(static_cast<std::uint32_t>(bundle.input.height));
  out.u32_le(static_cast<std::uint32_t>(bundle.input.width));
  out.u32_le(static_cast<std::uint32_t>(bundle.input.channels));
  out.u32_le(static_cast<std::uint32_t>(bundle.layers.size()));
  auto floats = [&out](const Eigen::VectorXf &v) {
    for (Index i = 0; i < v.size(); ++i)
      out.f32_le(v(i));
  };
  for (const auto &layer : bundle.layers) {
    std::visit(Overloaded{
                   [&](const ConvLayer &c) {
                     out.u32_le(kConv);
                     for (Index v : {c.kernel_h, c.kernel_w, c.in_channels, c.out_channels,
                                     c.stride})
                       out.u32_le(static_cast<std::uint32_t>(v));
                     floats(c.weights);
                     floats(c.bias);
                   },
                   [&](const ReluLayer &) { out.u32_le(kRelu); },
                   [&](const MaxPoolLayer &p) {
                     out.u32_le(kMaxPool);
                     out.u32_le(static_cast<std::uint32_t>(p.size));
                     out.u32_le(static_cast<std::uint32_t>(p.stride));
                   },
                   [&](const FlattenLayer &) { out.u32_le(kFlatten); },
                   [&](const DenseLayer &d) {
                     out.u32_le(kDense);
                     out.u32_le(static_cast<std::uint32_t>(d.in));
                     out.u32_le(static_cast<std::uint32_t>(d.out));
                     floats(d.weights);
                     floats(d.bias);
                   },
                   [&](const SoftmaxLayer &) { out.u32_le(kSoftmax); },
               },
               layer);
  }
  out.save(path);
}

WeightBundle load_bundle(const std::filesystem::path &path) {
  detail::ByteReader in(path);
  in.expect_magic("CCNW");
  if (in.u32_le() != 1)
    fail(ErrorKind::bad_header, path.string() + ": unsupported bundle version");
  WeightBundle bundle;
  bundle.input.height = in.u32_le();
  bundle.input.width = in.u32_le();
  bundle.input.channels = in.u32_le();
  const std::uint32_t count = in.u32_le();
  auto floats = [&in](Index n) {
    in.need(4 * static_cast<std::size_t>(n));
    Eigen::VectorXf v(n);
    for (Index i = 0; i < n; ++i)
      v(i) = in.f32_le();
    return v;
  };
  for (std::uint32_t l = 0; l < count; ++l) {
    switch (in.u32_le()) {
    case kConv: {
      ConvLayer c;
      c.kernel_h = in.u32_le();
      c.kernel_w = in.u32_le();
      c.in_channels = in.u32_le();
      c.out_channels = in.u32_le();
      c.stride = in.u32_le();
      c.weights = floats(c.kernel_h * c.kernel_w * c.in_channels * c.out_channels);
      c.bias = floats(c.out_channels);
      bundle.layers.emplace_back(std::move(c));
      break;
    }
    case kRelu: bundle.layers.emplace_back(ReluLayer{}); break;
    case kMaxPool: {
      MaxPoolLayer p;
      p.size = in.u32_le();
      p.stride = in.u32_le();
      bundle.layers.emplace_back(p);
      break;
    }
    case kFlatten: bundle.layers.emplace_back(FlattenLayer{}); break;
    case kDense: {
      DenseLayer d;
      d.in = in.u32_le();
      d.out = in.u32_le();
      d.weights = floats(d.in * d.out);
      d.bias = floats(d.out);
      bundle.layers.emplace_back(std::move(d));
      break;
    }
    case kSoftmax: bundle.layers.emplace_back(SoftmaxLayer{}); break;
    default: fail(ErrorKind::bad_header, path.string() + ": unknown layer tag");
    }
  }
  if (in.remaining() != 0)
    fail(ErrorKind::shape_mismatch, path.string() + ": trailing bytes after the last layer");
  bundle.shapes();
  return bundle;
}

WeightBundle load_bundle_manifest(const std::filesystem::path &manifest) {
  std::ifstream in(manifest);
  if (!in)
    fail(ErrorKind::missing_input, "cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::bad_header, manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  WeightBundle bundle;
  try {
    const auto &input = doc.at("input");
    bundle.input = {input.at(0).get<Index>(), input.at(1).get<Index>(), input.at(2).get<Index>()};
    for (const auto &spec : doc.at("layers")) {
      const auto type = spec.at("type").get<std::string>();
      if (type == "conv") {
        ConvLayer c;
        const auto &k = spec.at("kernel");
        c.kernel_h = k.at(0).get<Index>();
        c.kernel_w = k.at(1).get<Index>();
        c.in_channels = k.at(2).get<Index>();
        c.out_channels = k.at(3).get<Index>();
        c.stride = spec.value("stride", Index{1});
        c.weights = read_raw_f32(dir / spec.at("weights").get<std::string>(),
                                 c.kernel_h * c.kernel_w * c.in_channels * c.out_channels);
        c.bias = spec.contains("bias")
                     ? read_raw_f32(dir / spec.at("bias").get<std::string>(), c.out_channels)
                     : Eigen::VectorXf::Zero(c.out_channels);
        bundle.layers.emplace_back(std::move(c));
      } else if (type == "relu") {
        bundle.layers.emplace_back(ReluLayer{});
      } else if (type == "maxpool") {
        bundle.layers.emplace_back(
            MaxPoolLayer{spec.at("size").get<Index>(), spec.value("stride", spec.at("size").get<Index>())});
      } else if (type == "flatten") {
        bundle.layers.emplace_back(FlattenLayer{});
      } else if (type == "dense") {
        DenseLayer d;
        d.in = spec.at("in").get<Index>();
        d.out = spec.at("out").get<Index>();
        d.weights = read_raw_f32(dir / spec.at("weights").get<std::string>(), d.in * d.out);
        d.bias = spec.contains("bias")
                     ? read_raw_f32(dir / spec.at("bias").get<std::string>(), d.out)
                     : Eigen::VectorXf::Zero(d.out);
        bundle.layers.emplace_back(std::move(d));
      } else if (type == "softmax") {
        bundle.layers.emplace_back(SoftmaxLayer{});
      } else {
        fail(ErrorKind::bad_header, manifest.string() + ": unknown layer type \"" + type + "\"");
      }
    }
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::bad_header, manifest.string() + ": " + e.what());
  }
  bundle.shapes();
  return bundle;
}

WeightBundle load_any_bundle(const std::filesystem::path &path) {
  return path.extension() == ".json" ? load_bundle_manifest(path) : load_bundle(path);
}

} // namespace ccnn
