#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "indistill/models.hpp"
#include "indistill/prune.hpp"
#include "test_util.hpp"

namespace indistill {
namespace {

constexpr InputShape kCifar{3, 32, 32};
constexpr InputShape kFashion{1, 28, 28};

std::vector<std::size_t> widths(const ModelSpec& spec) {
  std::vector<std::size_t> w;
  for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) w.push_back(spec.layers[l].width);
  return w;
}

TEST(ParameterCount, CnnS) {
  EXPECT_EQ(parameter_count(student_cnn(kCifar, 10)), 15050u);
  EXPECT_EQ(parameter_count(student_cnn(kFashion, 10)), 14906u);
}

TEST(ParameterCount, CnnA) {
  EXPECT_EQ(parameter_count(make_auxiliary(student_cnn(kCifar, 10), 0.5)), 57994u);
  EXPECT_EQ(parameter_count(make_auxiliary(student_cnn(kFashion, 10), 0.5)), 57706u);
}

TEST(ParameterCount, BuiltModelAgreesWithSpec) {
  auto spec = make_auxiliary(student_cnn(kCifar, 10), 0.5);
  EXPECT_EQ(build_model(spec, 3).parameter_count(), 57994u);
}

TEST(ParameterCount, SingleDense) {
  ModelSpec spec;
  spec.input = {4, 1, 1};
  spec.num_classes = 2;
  spec.layers = {LayerSpec{LayerKind::kDense, 2}};
  spec.layers[0].activation = false;
  EXPECT_EQ(parameter_count(spec), 10u);
}

TEST(Forward, CnnSFeatureChannels) {
  Model m = build_model(student_cnn(kCifar, 10), 1);
  std::mt19937_64 rng(2);
  Tape<float> tape;
  auto out = forward_with_features(m, tape, testing::random_tensor<float>({1, 3, 32, 32}, rng));
  ASSERT_EQ(out.features.size(), 4u);
  const std::size_t expect[] = {8, 16, 32, 64};
  for (std::size_t l = 1; l <= 4; ++l) EXPECT_EQ(out.features.at(l).shape()[1], expect[l - 1]);
  EXPECT_EQ(out.logits.shape(), (Shape{1, 10}));
}

TEST(Forward, ZeroInputGivesEqualLogits) {
  Model m = build_model(student_cnn(kFashion, 10), 5);
  Tensor<float> zeros(Shape{2, 1, 28, 28}, 0.0f);
  auto logits = predict_logits(m, zeros);
  for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_EQ(logits[i], logits[0]);
}

// conv: floor((h + 2p - k)/s) + 1; maps are captured before the pool halves them
Shape oracle_shape(const ModelSpec& spec, std::size_t layer) {
  std::size_t c = spec.input.channels, h = spec.input.height, w = spec.input.width;
  bool flat = false;
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    const LayerSpec& s = spec.layers[l];
    if (s.kind == LayerKind::kConv) {
      h = (h + 2 * s.padding - s.kernel) / s.stride + 1;
      w = (w + 2 * s.padding - s.kernel) / s.stride + 1;
      c = s.width;
      if (l + 1 == layer) break;
      if (s.pool) h /= 2, w /= 2;
    } else {
      flat = true;
      n = s.width;
    }
  }
  return flat ? Shape{n} : Shape{c, h, w};
}

TEST(Forward, FeatureShapesMatchArithmetic) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ModelSpec spec;
    spec.input = {2, 20, 20};
    spec.num_classes = 3;
    const std::size_t convs = 1 + rng() % 2;
    for (std::size_t i = 0; i < convs; ++i) {
      LayerSpec s{LayerKind::kConv, 2 + rng() % 3};
      s.kernel = 1 + 2 * (rng() % 2);
      s.padding = rng() % 2;
      s.stride = i == 0 ? 1 + rng() % 2 : 1;
      s.pool = rng() % 2 == 0;
      spec.layers.push_back(s);
    }
    spec.layers.push_back({LayerKind::kDense, 5});
    LayerSpec out{LayerKind::kDense, 3};
    out.activation = false;
    spec.layers.push_back(out);

    Model m = build_model(spec, trial);
    Tape<float> tape;
    auto res = forward_with_features(m, tape, testing::random_tensor<float>({2, 2, 20, 20}, rng));
    for (std::size_t l = 1; l <= spec.feature_layers(); ++l) {
      Shape expect = oracle_shape(spec, l);
      EXPECT_EQ(feature_shape(spec, l), expect);
      Shape got(res.features.at(l).shape().begin() + 1, res.features.at(l).shape().end());
      EXPECT_EQ(got, expect) << "trial " << trial << " layer " << l;
    }
  }
}

TEST(Forward, WrongInputShapeThrows) {
  Model m = build_model(student_cnn(kFashion, 10), 1);
  Tape<float> tape;
  EXPECT_THROW(forward_with_features(m, tape, Tensor<float>(Shape{1, 3, 28, 28})), DimensionError);
}

TEST(Init, SeedDeterminesParameters) {
  Model a = build_model(student_cnn(kFashion, 10), 9), b = build_model(student_cnn(kFashion, 10), 9);
  Model c = build_model(student_cnn(kFashion, 10), 10);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
    differs |= !(a.parameters()[i].value == c.parameters()[i].value);
  }
  EXPECT_TRUE(differs);
}

TEST(MakeAuxiliary, DoublesCnnSWidths) {
  auto aux = make_auxiliary(student_cnn(kCifar, 10), 0.5);
  EXPECT_EQ(widths(aux), (std::vector<std::size_t>{16, 32, 64, 128}));
  EXPECT_EQ(aux.role, ModelRole::kAuxiliary);
}

TEST(MakeAuxiliary, ZeroRateIsIdentity) {
  auto s = student_cnn(kCifar, 10);
  auto aux = make_auxiliary(s, 0.0);
  EXPECT_EQ(aux.layers, s.layers);
}

TEST(MakeAuxiliary, NonIntegralWidthRejected) {
  ModelSpec s = tiny_cnn(std::vector<std::size_t>{9}, 18, kFashion, 10, ModelRole::kStudent);
  EXPECT_THROW(make_auxiliary(s, 1.0 / 3.0), ConfigError);
  EXPECT_THROW(make_auxiliary(student_cnn(kCifar, 10), 1.0), ConfigError);
}

class DepthSweep : public ::testing::TestWithParam<std::size_t> {};

TEST_P(DepthSweep, InvariantsHold) {
  const std::size_t depth = GetParam();
  for (InputShape in : {kFashion, kCifar}) {
    auto student = student_cnn(in, 10, depth);
    ASSERT_NO_THROW(validate(student));
    EXPECT_EQ(student.feature_layers(), depth + 1);
    auto aux = make_auxiliary(student, 0.5);
    EXPECT_EQ(aux.feature_layers(), student.feature_layers());

    // pruning the auxiliary at q reproduces the student widths layer by layer
    Model a = build_model(aux, depth);
    auto sels = prune_model(a, 0.5);
    ASSERT_EQ(sels.size(), depth);
    for (std::size_t l = 1; l <= depth; ++l) {
      EXPECT_EQ(sels[l - 1].kept.size(), student.layers[l - 1].width);
      EXPECT_EQ(feature_shape(aux, l)[1], feature_shape(student, l)[1]);
      EXPECT_EQ(feature_shape(aux, l)[2], feature_shape(student, l)[2]);
    }

    Model s = build_model(student, 1);
    Tape<float> tape;
    Tensor<float> x(Shape{2, in.channels, in.height, in.width}, 0.5f);
    auto res = forward_with_features(s, tape, x);
    EXPECT_EQ(res.features.size(), depth + 1);
    EXPECT_EQ(res.logits.shape(), (Shape{2, 10}));
  }
}

INSTANTIATE_TEST_SUITE_P(Depths, DepthSweep, ::testing::Range<std::size_t>(2, 8));

TEST(Role, ParseRoundTrip) {
  for (auto r : {ModelRole::kTeacher, ModelRole::kAuxiliary, ModelRole::kStudent})
    EXPECT_EQ(parse_model_role(to_string(r)), r);
  EXPECT_THROW(parse_model_role("oracle"), ConfigError);
}

}  // namespace
}  // namespace indistill
