#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "indistill/data.hpp"
#include "indistill/models.hpp"

namespace indistill {

// Row-major [n, d] embeddings with one class id per row.
struct EmbeddingSet {
  std::vector<double> values;
  std::size_t dim = 0;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  static EmbeddingSet from(const Tensor<float>& matrix, std::span<const int> labels);
};

enum class Similarity { kCosine, kEuclidean };

struct RetrievalScores {
  double map = 0.0;
  double precision_at_k = 0.0;
  std::size_t k = 0;
  std::size_t queries = 0;  // queries counted in mAP
};

// Leave-one-out retrieval: every sample queries the rest, ranked by descending
// similarity (ascending distance), equal scores by ascending index. Queries
// whose class has no other member are skipped for mAP. P@k divides by
// min(k, n - 1).
RetrievalScores retrieval_scores(const EmbeddingSet& emb, std::size_t k,
                                 Similarity sim = Similarity::kCosine);
double mean_average_precision(const EmbeddingSet& emb, Similarity sim = Similarity::kCosine);
double precision_at_k(const EmbeddingSet& emb, std::size_t k, Similarity sim = Similarity::kCosine);

// AP of one query; nullopt when no other sample shares its class.
std::optional<double> average_precision(const EmbeddingSet& emb, std::size_t query,
                                        Similarity sim = Similarity::kCosine);

// Gallery order for one query (query excluded).
std::vector<std::size_t> rank_gallery(const EmbeddingSet& emb, std::size_t query,
                                      Similarity sim = Similarity::kCosine);

// Top-1 accuracy; argmax ties go to the lowest class index.
double accuracy_from_logits(const Tensor<float>& logits, std::span<const int> labels);
double accuracy(Model& model, const Dataset& data, std::size_t batch_size = 256);

// Penultimate embeddings of the whole dataset, eval mode.
EmbeddingSet embed_dataset(Model& model, const Dataset& data, std::size_t batch_size = 256);

inline constexpr std::size_t kMiBatchSize = 128;

// Mean PKT divergence between teacher and student penultimate features over
// consecutive batches of kMiBatchSize samples in dataset order (a trailing
// partial batch is dropped unless it is the only one).
double mi_divergence_measure(Model& teacher, Model& student, const Dataset& data,
                             std::size_t batch_size = kMiBatchSize);

struct EvalReport {
  std::size_t samples = 0;
  double map = 0.0;
  double precision_at_k = 0.0;
  std::size_t k = 0;
  double accuracy = 0.0;
  std::optional<double> mi_divergence;
  std::size_t mi_batch_size = kMiBatchSize;
  std::size_t parameters = 0;
  double latency_ms = 0.0;  // mean wall-clock per sample, batched eval forward

  std::string to_key_value() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// teacher may be null, in which case mi_divergence is absent.
EvalReport evaluate_all(Model& student, Model* teacher, const Dataset& data, std::size_t k = 100);

}  // namespace indistill
