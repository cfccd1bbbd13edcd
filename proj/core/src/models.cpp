#include "indistill/models.hpp"

#include <cmath>
#include <sstream>

#include "indistill/random.hpp"

namespace indistill {

std::string to_string(LayerKind kind) { return kind == LayerKind::kConv ? "conv" : "dense"; }

std::string to_string(ModelRole role) {
  switch (role) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kAuxiliary: return "auxiliary";
    case ModelRole::kStudent: return "student";
  }
  return "student";
}

ModelRole parse_model_role(const std::string& name) {
  if (name == "teacher") return ModelRole::kTeacher;
  if (name == "auxiliary") return ModelRole::kAuxiliary;
  if (name == "student") return ModelRole::kStudent;
  throw ConfigError("unknown model role '" + name + "'");
}

namespace {

struct Spatial {
  std::size_t channels, height, width;
};

// Walks the layer stack with the closed-form size arithmetic; `visit` sees each
// layer's post-activation shape.
template <typename Visit>
void walk_shapes(const ModelSpec& spec, Visit&& visit) {
  Spatial s{spec.input.channels, spec.input.height, spec.input.width};
  std::size_t flat = 0;
  bool flattened = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i + 1);
    if (l.width == 0) throw ConfigError(where + ": width must be positive");
    if (l.kind == LayerKind::kConv) {
      if (flattened) throw ConfigError(where + ": conv layer after a dense layer");
      if (l.kernel == 0 || l.stride == 0) throw ConfigError(where + ": kernel and stride must be >= 1");
      if (s.height + 2 * l.padding < l.kernel || s.width + 2 * l.padding < l.kernel) {
        throw ConfigError(where + ": input " + std::to_string(s.height) + "x" +
                          std::to_string(s.width) + " too small for kernel " +
                          std::to_string(l.kernel));
      }
      s.height = (s.height + 2 * l.padding - l.kernel) / l.stride + 1;
      s.width = (s.width + 2 * l.padding - l.kernel) / l.stride + 1;
      s.channels = l.width;
      visit(i, Shape{s.channels, s.height, s.width}, s.channels * s.height * s.width);
      if (l.pool) {
        if (s.height < 2 || s.width < 2) throw ConfigError(where + ": map too small to pool");
        s.height /= 2;
        s.width /= 2;
      }
      flat = s.channels * s.height * s.width;
    } else {
      if (!flattened) {
        flat = s.channels * s.height * s.width;
        flattened = true;
      }
      visit(i, Shape{l.width}, flat);
      flat = l.width;
    }
  }
}

}  // namespace

void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("model needs at least a classifier layer");
  if (spec.num_classes < 2) throw ConfigError("model needs at least 2 classes");
  if (spec.input.channels == 0 || spec.input.height == 0 || spec.input.width == 0) {
    throw ConfigError("input shape must be positive");
  }
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::kDense || last.width != spec.num_classes) {
    throw ConfigError("last layer must be dense with width num_classes = " +
                      std::to_string(spec.num_classes));
  }
  walk_shapes(spec, [](std::size_t, const Shape&, std::size_t) {});
}

Shape feature_shape(const ModelSpec& spec, std::size_t layer) {
  if (layer == 0 || layer > spec.feature_layers()) {
    throw ParameterError("feature layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(spec.feature_layers()));
  }
  Shape out;
  walk_shapes(spec, [&](std::size_t i, const Shape& s, std::size_t) {
    if (i + 1 == layer) out = s;
  });
  return out;
}

std::size_t parameter_count(const ModelSpec& spec) {
  validate(spec);
  std::size_t total = 0;
  std::size_t in_channels = spec.input.channels;
  walk_shapes(spec, [&](std::size_t i, const Shape&, std::size_t fan) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::kConv) {
      total += in_channels * l.width * l.kernel * l.kernel + l.width;
      if (l.batchnorm) total += 2 * l.width;
      in_channels = l.width;
    } else {
      total += fan * l.width + l.width;
    }
  });
  return total;
}

ModelSpec tiny_cnn(std::span<const std::size_t> conv_widths, std::size_t fc_width,
                   InputShape input, std::size_t num_classes, ModelRole role) {
  ModelSpec spec;
  spec.num_classes = num_classes;
  spec.role = role;
  spec.input = input;
  std::size_t size = std::min(input.height, input.width);
  for (std::size_t i = 0; i < conv_widths.size(); ++i) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.width = conv_widths[i];
    l.kernel = 3;
    l.padding = (i == 0 || size < 5) ? 1 : 0;
    size = size + 2 * l.padding - 2;
    l.pool = size >= 2;
    if (l.pool) size /= 2;
    spec.layers.push_back(l);
  }
  spec.layers.push_back({.kind = LayerKind::kDense, .width = fc_width, .kernel = 1,
                         .batchnorm = false, .activation = true, .pool = false});
  spec.layers.push_back({.kind = LayerKind::kDense, .width = num_classes, .kernel = 1,
                         .batchnorm = false, .activation = false, .pool = false});
  return spec;
}

ModelSpec student_cnn(InputShape input, std::size_t num_classes, std::size_t depth) {
  if (depth < 2 || depth > 7) throw ConfigError("model depth must be in 2..7 conv layers");
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < depth; ++i) widths.push_back(std::min<std::size_t>(8u << i, 64));
  return tiny_cnn(widths, 64, input, num_classes, ModelRole::kStudent);
}

ModelSpec scaled_cnn(const ModelSpec& spec, std::size_t factor, ModelRole role) {
  ModelSpec out = spec;
  out.role = role;
  for (std::size_t i = 0; i + 1 < out.layers.size(); ++i) out.layers[i].width *= factor;
  return out;
}

ModelSpec make_auxiliary(const ModelSpec& student, double pruning_rate) {
  if (!(pruning_rate >= 0.0 && pruning_rate < 1.0)) {
    throw ConfigError("pruning rate q must lie in [0, 1), got " + std::to_string(pruning_rate));
  }
  ModelSpec aux = student;
  aux.role = ModelRole::kAuxiliary;
  for (std::size_t i = 0; i + 1 < aux.layers.size(); ++i) {
    const double exact = static_cast<double>(student.layers[i].width) / (1.0 - pruning_rate);
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9 * exact) {
      std::ostringstream msg;
      msg << "pruning rate q = " << pruning_rate << " gives non-integer auxiliary width "
          << exact << " for layer " << i + 1 << " (student width " << student.layers[i].width
          << "); choose q so that every width n / (1 - q) is an integer, e.g. q = 0.5";
      throw ConfigError(msg.str());
    }
    aux.layers[i].width = static_cast<std::size_t>(rounded);
  }
  return aux;
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  validate(spec_);
  Rng rng(seed);
  std::size_t in_channels = spec_.input.channels;
  std::vector<std::size_t> fans;
  walk_shapes(spec_, [&](std::size_t, const Shape&, std::size_t fan) { fans.push_back(fan); });

  // Two passes: first size the vector so Parameter addresses stay stable.
  std::size_t count = 0;
  for (const auto& l : spec_.layers) count += 2 + (l.kind == LayerKind::kConv && l.batchnorm ? 2 : 0);
  params_.reserve(count);

  auto kaiming = [&](Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
  };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string tag = std::to_string(i + 1);
    LayerParams lp;
    if (l.kind == LayerKind::kConv) {
      lp.weight = params_.size();
      params_.emplace_back("conv" + tag + ".weight",
                           kaiming({in_channels, l.width, l.kernel, l.kernel},
                                   in_channels * l.kernel * l.kernel));
      lp.bias = params_.size();
      params_.emplace_back("conv" + tag + ".bias", Tensor<float>(Shape{l.width}));
      if (l.batchnorm) {
        lp.gamma = params_.size();
        params_.emplace_back("bn" + tag + ".gamma", Tensor<float>(Shape{l.width}, 1.0f));
        lp.beta = params_.size();
        params_.emplace_back("bn" + tag + ".beta", Tensor<float>(Shape{l.width}));
        lp.stats = stats_.size();
        stats_.emplace_back(l.width);
      }
      in_channels = l.width;
    } else {
      lp.weight = params_.size();
      params_.emplace_back("fc" + tag + ".weight", kaiming({fans[i], l.width}, fans[i]));
      lp.bias = params_.size();
      params_.emplace_back("fc" + tag + ".bias", Tensor<float>(Shape{l.width}));
    }
    layers_.push_back(lp);
  }
}

std::size_t Model::parameters_through(std::size_t l) const {
  if (l == 0) return 0;
  if (l >= layers_.size()) return params_.size();
  return layers_[l].weight;
}

Tensor<float> Model::filter_bank(std::size_t l) const {
  const Tensor<float>& w = params_.at(layer(l).weight).value;
  if (w.rank() == 4) return w;
  return w.reshaped(Shape{w.dim(0), w.dim(1), 1, 1});
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ForwardResult Model::forward(Tape<float>& tape, const Tensor<float>& batch,
                             const ForwardOptions& options) {
  const InputShape& in = spec_.input;
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height ||
      batch.dim(3) != in.width) {
    throw DimensionError("model expects input [N, " + std::to_string(in.channels) + ", " +
                         std::to_string(in.height) + ", " + std::to_string(in.width) +
                         "], got " + to_string(batch.shape()));
  }
  ForwardResult result;
  Var<float> h = tape.constant(batch);
  const std::size_t n_layers = spec_.layers.size();
  const std::size_t stop = options.stop_after == 0 ? n_layers : options.stop_after;
  for (std::size_t i = 0; i < std::min(stop, n_layers); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const LayerParams& lp = layers_[i];
    const bool trainable = i < options.trainable_layers;
    auto leaf = [&](std::size_t idx) { return tape.leaf(params_[idx], trainable); };
    const bool is_classifier = i + 1 == n_layers;
    if (l.kind == LayerKind::kConv) {
      h = conv2d(h, leaf(lp.weight), leaf(lp.bias), {.stride = l.stride, .padding = l.padding});
      if (l.batchnorm) {
        h = batchnorm2d(h, leaf(lp.gamma), leaf(lp.beta), stats_[lp.stats], options.mode);
      }
      if (l.activation) h = relu(h);
      result.features.push(h);
      if (l.pool) h = maxpool2d(h, 2, 2);
    } else {
      if (h.shape().size() != 2) h = flatten(h);
      h = dense(h, leaf(lp.weight), leaf(lp.bias));
      if (is_classifier) {
        result.logits = h;
      } else {
        if (l.activation) h = relu(h);
        result.features.push(h);
      }
    }
  }
  return result;
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) { return Model(spec, seed); }

ForwardResult forward_with_features(Model& model, Tape<float>& tape, const Tensor<float>& batch,
                                    const ForwardOptions& options) {
  return model.forward(tape, batch, options);
}

Tensor<float> predict_logits(Model& model, const Tensor<float>& batch) {
  Tape<float> tape;
  return model.forward(tape, batch, {}).logits.value();
}

Tensor<float> embed(Model& model, const Tensor<float>& batch) {
  Tape<float> tape;
  const std::size_t last = model.spec().feature_layers();
  auto r = model.forward(tape, batch, {.stop_after = last});
  return r.features.at(last).value();
}

}  // namespace indistill
