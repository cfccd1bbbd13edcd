#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "indistill/metrics.hpp"
#include "oracles.hpp"

namespace indistill {
namespace {

using oracle::brute_force;
using oracle::random_set;

EmbeddingSet make_set(std::vector<std::vector<double>> rows, std::vector<int> labels) {
  EmbeddingSet e;
  e.dim = rows[0].size();
  for (const auto& r : rows) e.values.insert(e.values.end(), r.begin(), r.end());
  e.labels = std::move(labels);
  return e;
}

TEST(Map, SingleClassIsOne) {
  std::mt19937_64 rng(1);
  auto e = random_set(rng, 20, 4, 1, false);
  EXPECT_DOUBLE_EQ(mean_average_precision(e), 1.0);
  EXPECT_DOUBLE_EQ(precision_at_k(e, 5), 1.0);
}

TEST(Map, HandComputedAp) {
  // query [1,0]; gallery ranks a (same), b (other), c (same)
  auto e = make_set({{1, 0}, {1, 0.1}, {1, 0.5}, {1, 1}}, {0, 0, 1, 0});
  EXPECT_EQ(rank_gallery(e, 0), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(*average_precision(e, 0), 5.0 / 6.0);
  EXPECT_FALSE(average_precision(e, 2).has_value());
}

TEST(PrecisionAtK, TopTwo) {
  auto e = make_set({{1, 0}, {1, 0.1}, {1, 0.5}}, {0, 0, 1});
  // query 0: (same, diff) -> 0.5
  auto order = rank_gallery(e, 0);
  ASSERT_EQ(order, (std::vector<std::size_t>{1, 2}));
  auto s = retrieval_scores(e, 2);
  // query 1 ranks 0 then 2 (0.5), query 2 ranks 1 then 0 (0)
  EXPECT_DOUBLE_EQ(s.precision_at_k, (0.5 + 0.5 + 0.0) / 3.0);
}

TEST(PrecisionAtK, ClampsToGallery) {
  std::mt19937_64 rng(2);
  auto e = random_set(rng, 15, 3, 3, false);
  EXPECT_DOUBLE_EQ(precision_at_k(e, 100), precision_at_k(e, 14));
}

TEST(Ranking, TiesBreakByIndex) {
  auto e = make_set({{1, 0}, {0, 1}, {0, 2}, {0, 1}}, {0, 1, 1, 0});
  EXPECT_EQ(rank_gallery(e, 0), (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Map, FuzzAgainstBruteForce) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 99, d = 1 + rng() % 6;
    auto e = random_set(rng, n, d, 1 + static_cast<int>(rng() % 5), trial % 2 == 0);
    const std::size_t k = 1 + rng() % 20;
    auto got = retrieval_scores(e, k);
    auto want = brute_force(e, k);
    ASSERT_EQ(got.map, want.map) << "trial " << trial;
    ASSERT_EQ(got.precision_at_k, want.pk) << "trial " << trial;
    ASSERT_GE(got.map, 0.0);
    ASSERT_LE(got.map, 1.0);
  }
}

TEST(Map, RescalingInvariant) {
  std::mt19937_64 rng(5);
  auto e = random_set(rng, 60, 5, 3, false);
  auto scaled = e;
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double s = u(rng);
    for (std::size_t q = 0; q < e.dim; ++q) scaled.values[i * e.dim + q] *= s;
  }
  for (std::size_t i = 0; i < e.size(); ++i) ASSERT_EQ(rank_gallery(e, i), rank_gallery(scaled, i));
  EXPECT_EQ(retrieval_scores(e, 10).map, retrieval_scores(scaled, 10).map);
}

TEST(Map, RandomTwoClassIsChance) {
  std::mt19937_64 rng(7);
  auto e = random_set(rng, 1000, 16, 1, false);
  for (std::size_t i = 0; i < e.size(); ++i) e.labels[i] = static_cast<int>(i % 2);
  EXPECT_NEAR(mean_average_precision(e), 0.5, 0.05);
}

TEST(Map, EuclideanMode) {
  auto e = make_set({{0, 0}, {0.1, 0}, {5, 5}, {0.2, 0}}, {0, 0, 1, 1});
  EXPECT_EQ(rank_gallery(e, 0, Similarity::kEuclidean), (std::vector<std::size_t>{1, 3, 2}));
}

TEST(Map, Errors) {
  EmbeddingSet one = make_set({{1.0}}, {0});
  EXPECT_THROW(mean_average_precision(one), ParameterError);
}

TEST(Accuracy, FromLogits) {
  Tensor<float> perfect(Shape{3, 3}, std::vector<float>{5, 0, 0, 0, 5, 0, 0, 0, 5});
  const int labels[] = {0, 1, 2};
  EXPECT_DOUBLE_EQ(accuracy_from_logits(perfect, labels), 1.0);
  Tensor<float> flat(Shape{3, 3}, 0.5f);
  EXPECT_DOUBLE_EQ(accuracy_from_logits(flat, labels), 1.0 / 3.0);
}

TEST(Accuracy, ModelEvaluationIsRepeatable) {
  Dataset d = synthetic_blobs(40, 4, 1, 12, 12, 3);
  Model m = build_model(student_cnn({1, 12, 12}, 4, 2), 1);
  const double a = accuracy(m, d);
  EXPECT_EQ(accuracy(m, d), a);
}

TEST(MiDivergence, SameModelIsZero) {
  Dataset d = synthetic_blobs(300, 3, 1, 12, 12, 3);
  Model m = build_model(student_cnn({1, 12, 12}, 3, 2), 1);
  EXPECT_NEAR(mi_divergence_measure(m, m, d), 0.0, 1e-12);
  Model other = build_model(student_cnn({1, 12, 12}, 3, 3), 2);
  const double v = mi_divergence_measure(m, other, d);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(v, 0.0);
}

TEST(EvaluateAll, PopulatedAndConsistent) {
  Dataset d = synthetic_blobs(50, 5, 1, 12, 12, 4);
  Model s = build_model(student_cnn({1, 12, 12}, 5, 2), 1);
  Model s_copy = s;
  EvalReport r = evaluate_all(s, &s_copy, d, 10);
  ASSERT_TRUE(r.mi_divergence.has_value());
  EXPECT_NEAR(*r.mi_divergence, 0.0, 1e-12);
  EXPECT_EQ(r.parameters, s.parameter_count());
  EXPECT_TRUE(std::isfinite(r.latency_ms));
  EXPECT_GE(r.latency_ms, 0.0);
  auto o = brute_force(embed_dataset(s, d), 10);
  EXPECT_EQ(r.map, o.map);
  EXPECT_EQ(r.precision_at_k, o.pk);
  EXPECT_NE(r.to_key_value().find("precision_at_10="), std::string::npos);
  const std::string row = r.csv_row(), header = EvalReport::csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
}

}  // namespace
}  // namespace indistill
