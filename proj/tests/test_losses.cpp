#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "indistill/losses.hpp"
#include "test_util.hpp"

namespace indistill {
namespace {

using testing::random_tensor;

// Direct pairwise evaluation of the PKT divergence, written from the formula.
double pkt_oracle(const Tensor<double>& ft, const Tensor<double>& fs) {
  const std::size_t n = ft.dim(0);
  auto cosine = [](const Tensor<double>& f, std::size_t i, std::size_t j) {
    const std::size_t d = f.dim(1);
    double dot = 0, ni = 0, nj = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += f[i * d + k] * f[j * d + k];
      ni += f[i * d + k] * f[i * d + k];
      nj += f[j * d + k] * f[j * d + k];
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
  };
  auto cond = [&](const Tensor<double>& f, std::size_t i, std::size_t j) {
    double denom = 0;
    for (std::size_t m = 0; m < n; ++m)
      if (m != i) denom += (cosine(f, i, m) + 1) / 2;
    return (cosine(f, i, j) + 1) / 2 / denom;
  };
  double total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double pt = cond(ft, i, j), ps = cond(fs, i, j);
      total += pt * std::log((pt + 1e-7) / (ps + 1e-7));
    }
  return total / static_cast<double>(n);
}

TEST(MseFeatureLoss, EqualMapsGiveZero) {
  std::mt19937_64 rng(1);
  auto p = random_tensor<double>({2, 3, 4, 4}, rng);
  EXPECT_EQ(mse_feature_loss(p, p).value, 0.0);
}

TEST(MseFeatureLoss, ZerosVersusOnes) {
  Tensor<double> p(Shape{1, 2, 2, 2}, 0.0), s(Shape{1, 2, 2, 2}, 1.0);
  auto loss = mse_feature_loss(p, s, 3);
  EXPECT_DOUBLE_EQ(loss.value, 8.0);
  EXPECT_EQ(loss.kind, LossKind::kMse);
  EXPECT_EQ(loss.layer, 3u);
}

TEST(MseFeatureLoss, AveragesOverBatch) {
  Tensor<double> p(Shape{2, 2, 2, 2}, 0.0), s(Shape{2, 2, 2, 2}, 0.0);
  for (std::size_t i = 0; i < 8; ++i) s[i] = 1.0;  // sample 0 sums to 8, sample 1 to 0
  EXPECT_DOUBLE_EQ(mse_feature_loss(p, s).value, 4.0);
}

TEST(MseFeatureLoss, ShapeMismatchIsAlignmentError) {
  Tensor<float> p(Shape{1, 8, 4, 4}), s(Shape{1, 16, 4, 4});
  EXPECT_THROW(mse_feature_loss(p, s), AlignmentError);
}

TEST(KlDistillLoss, IdenticalLogitsGiveZero) {
  Tensor<double> u(Shape{2, 3}, {1, 2, 3, -1, 0, 4});
  EXPECT_NEAR(kl_distill_loss(u, u, 4.0).value, 0.0, 1e-15);
}

TEST(KlDistillLoss, HalfHalfAgainstQuarterThreeQuarters) {
  Tensor<double> u(Shape{2}, {0.0, 0.0}), v(Shape{2}, {0.0, std::log(3.0)});
  EXPECT_NEAR(kl_distill_loss(u, v, 1.0).value, 0.5 * std::log(4.0 / 3.0), 1e-12);
  EXPECT_NEAR(kl_distill_loss(u, v, 1.0).value, 0.14384, 1e-5);
}

TEST(KlDistillLoss, TemperatureTwoMatchesDirectEvaluation) {
  Tensor<double> u(Shape{2}, {0.0, 0.0}), v(Shape{2}, {0.0, std::log(3.0)});
  // softmax(v / 2) = (1, sqrt 3) / (1 + sqrt 3)
  const double s3 = std::sqrt(3.0);
  const double qs0 = 1.0 / (1.0 + s3), qs1 = s3 / (1.0 + s3);
  const double expected = 4.0 * (0.5 * std::log(0.5 / qs0) + 0.5 * std::log(0.5 / qs1));
  EXPECT_NEAR(kl_distill_loss(u, v, 2.0).value, expected, 1e-12);
}

TEST(KlDistillLoss, RejectsBadTemperatureAndShapes) {
  Tensor<double> u(Shape{3}), v(Shape{3}), w(Shape{4});
  EXPECT_THROW(kl_distill_loss(u, v, 0.0), ParameterError);
  EXPECT_THROW(kl_distill_loss(u, w, 1.0), DimensionError);
}

TEST(KlDistillLoss, ShiftingEitherSideLeavesLossUnchanged) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto u = random_tensor<double>({3, 5}, rng, -4, 4);
    auto v = random_tensor<double>({3, 5}, rng, -4, 4);
    const double base = kl_distill_loss(u, v, 2.0).value;
    for (auto& x : u.data()) x += 7.5;
    for (auto& x : v.data()) x -= 3.25;
    EXPECT_NEAR(kl_distill_loss(u, v, 2.0).value, base, 1e-10);
    EXPECT_GE(base, 0.0);
  }
}

TEST(PktLoss, IdenticalFeaturesGiveZero) {
  std::mt19937_64 rng(3);
  auto f = random_tensor<double>({6, 5}, rng);
  EXPECT_NEAR(pkt_loss(f, f).value, 0.0, 1e-15);
}

TEST(PktLoss, PositiveRowScalingGivesZero) {
  std::mt19937_64 rng(4);
  auto f = random_tensor<double>({6, 5}, rng);
  Tensor<double> g = f;
  for (auto& v : g.data()) v *= 3.0;
  EXPECT_NEAR(pkt_loss(f, g).value, 0.0, 1e-6);
}

TEST(PktLoss, MatchesPairwiseOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto ft = random_tensor<double>({8, 4}, rng);
    auto fs = random_tensor<double>({8, 6}, rng);
    EXPECT_NEAR(pkt_loss(ft, fs).value, pkt_oracle(ft, fs), 1e-6);
  }
}

TEST(PktLoss, InvariantToPerVectorRescaling) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> factor(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto ft = random_tensor<double>({10, 4}, rng);
    auto fs = random_tensor<double>({10, 7}, rng);
    const double base = pkt_loss(ft, fs).value;
    for (std::size_t i = 0; i < 10; ++i) {
      const double a = factor(rng), b = factor(rng);
      for (std::size_t k = 0; k < 4; ++k) ft[i * 4 + k] *= a;
      for (std::size_t k = 0; k < 7; ++k) fs[i * 7 + k] *= b;
    }
    EXPECT_LT(std::abs(pkt_loss(ft, fs).value - base), 1e-6);
    EXPECT_GE(base, 0.0);
  }
}

TEST(PktLoss, NeedsTwoSamples) {
  Tensor<double> f(Shape{1, 3}, 1.0);
  EXPECT_THROW(pkt_loss(f, f), ParameterError);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  Tensor<double> logits(Shape{2, 3}, {100, 0, 0, 0, 0, 100});
  std::vector<int> labels{0, 2};
  EXPECT_NEAR(cross_entropy(logits, labels).value, 0.0, 1e-12);
}

TEST(CrossEntropy, UniformTenClassIsLogTen) {
  Tensor<double> logits(Shape{4, 10}, 0.3);
  std::vector<int> labels{0, 3, 7, 9};
  EXPECT_NEAR(cross_entropy(logits, labels).value, std::log(10.0), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tensor<double> logits(Shape{1, 3});
  std::vector<int> labels{3};
  EXPECT_THROW(cross_entropy(logits, labels), ParameterError);
}

}  // namespace
}  // namespace indistill
