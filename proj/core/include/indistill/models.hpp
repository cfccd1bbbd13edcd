#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "indistill/autograd.hpp"
#include "indistill/ops.hpp"

namespace indistill {

enum class LayerKind { kConv, kDense };
enum class ModelRole { kTeacher, kAuxiliary, kStudent };

std::string to_string(LayerKind kind);
std::string to_string(ModelRole role);
ModelRole parse_model_role(const std::string& name);

// One row entry of an architecture table. Conv layers are conv -> [batchnorm]
// -> [relu] -> [2x2 max-pool]; dense layers are dense -> [relu].
struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::size_t width = 0;  // filters or neurons
  std::size_t kernel = 3;
  std::size_t padding = 0;
  std::size_t stride = 1;
  bool batchnorm = true;
  bool activation = true;
  bool pool = true;

  bool operator==(const LayerSpec&) const = default;
};

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  bool operator==(const InputShape&) const = default;
};

// The last layer is the dense classifier; every earlier layer produces a
// feature map, so feature_layers() is L_g / L_f / L_d depending on role.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 10;
  ModelRole role = ModelRole::kStudent;
  InputShape input;

  std::size_t feature_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  bool operator==(const ModelSpec&) const = default;
};

// Throws ConfigError describing the first problem found.
void validate(const ModelSpec& spec);

// Per-sample shape ([C, H, W] or [n]) of feature layer l (1-based), from the
// closed-form conv/pool arithmetic.
Shape feature_shape(const ModelSpec& spec, std::size_t layer);
std::size_t parameter_count(const ModelSpec& spec);

// Tiny CNN with the given conv widths (3x3 kernels), one hidden fc layer and
// the classifier. Padding is 1 on the first conv and on any conv whose input
// is narrower than 5 pixels, else 0; a 2x2 pool follows every conv whose
// output is at least 2 pixels wide.
ModelSpec tiny_cnn(std::span<const std::size_t> conv_widths, std::size_t fc_width,
                   InputShape input, std::size_t num_classes, ModelRole role);

// Student with `depth` conv layers (widths 8, 16, 32, then 64) and fc 64;
// depth 3 is CNN-S.
ModelSpec student_cnn(InputShape input, std::size_t num_classes, std::size_t depth = 3);

// CNN-S widths scaled by `factor` (2 gives CNN-A).
ModelSpec scaled_cnn(const ModelSpec& spec, std::size_t factor, ModelRole role);

// Auxiliary spec whose feature widths are n / (1 - q); after pruning at rate q
// every feature layer matches the student width. Throws ConfigError when a
// width is not integral.
ModelSpec make_auxiliary(const ModelSpec& student, double pruning_rate);

// Per-layer post-activation feature maps of one forward pass, indexed 1..L.
class FeatureCapture {
 public:
  const Var<float>& at(std::size_t layer) const { return maps_.at(layer - 1); }
  std::size_t size() const noexcept { return maps_.size(); }
  void push(Var<float> v) { maps_.push_back(v); }

 private:
  std::vector<Var<float>> maps_;
};

struct ForwardOptions {
  BatchNormMode mode = BatchNormMode::kEval;
  // Parameters of layers 1..trainable_layers are recorded as trainable leaves.
  std::size_t trainable_layers = 0;
  // Forward stops after this layer (1-based); 0 runs the full network.
  std::size_t stop_after = 0;
};

struct ForwardResult {
  Var<float> logits;  // invalid when the pass stopped before the classifier
  FeatureCapture features;
};

class Model {
 public:
  struct LayerParams {
    std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;
    std::size_t stats = 0;  // index into running_stats(); valid when batchnorm
  };

  Model() = default;
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::vector<Parameter<float>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<float>>& parameters() const noexcept { return params_; }
  std::vector<RunningStats<float>>& running_stats() noexcept { return stats_; }
  const std::vector<RunningStats<float>>& running_stats() const noexcept { return stats_; }
  const LayerParams& layer(std::size_t l) const { return layers_.at(l - 1); }
  // Index range [first, last) of the parameters owned by layers 1..l.
  std::size_t parameters_through(std::size_t l) const;

  // Weight of layer l in [n_in, n_out, k, k] layout (dense weights as k = 1).
  Tensor<float> filter_bank(std::size_t l) const;

  std::size_t parameter_count() const;

  ForwardResult forward(Tape<float>& tape, const Tensor<float>& batch,
                        const ForwardOptions& options);

 private:
  ModelSpec spec_;
  std::vector<Parameter<float>> params_;
  std::vector<RunningStats<float>> stats_;
  std::vector<LayerParams> layers_;
};

Model build_model(const ModelSpec& spec, std::uint64_t seed);

ForwardResult forward_with_features(Model& model, Tape<float>& tape, const Tensor<float>& batch,
                                    const ForwardOptions& options = {});

// Eval-mode convenience passes.
Tensor<float> predict_logits(Model& model, const Tensor<float>& batch);
// Penultimate (last feature layer) activations, [N, width].
Tensor<float> embed(Model& model, const Tensor<float>& batch);

}  // namespace indistill
