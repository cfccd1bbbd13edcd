#include "indistill/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "indistill/losses.hpp"

namespace indistill {

EmbeddingSet EmbeddingSet::from(const Tensor<float>& matrix, std::span<const int> labels) {
  if (matrix.rank() != 2 || matrix.dim(0) != labels.size()) {
    throw DimensionError("embeddings " + to_string(matrix.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  EmbeddingSet e;
  e.dim = matrix.dim(1);
  e.values.assign(matrix.data().begin(), matrix.data().end());
  e.labels.assign(labels.begin(), labels.end());
  return e;
}

namespace {

void check(const EmbeddingSet& emb) {
  if (emb.size() < 2) throw ParameterError("retrieval needs at least 2 samples");
  if (emb.dim == 0 || emb.values.size() != emb.size() * emb.dim) {
    throw DimensionError("embedding matrix does not match its label count");
  }
  for (double v : emb.values)
    if (!std::isfinite(v)) throw NumericError("non-finite embedding value");
}

// Rows scaled to unit length for cosine, untouched for euclidean.
std::vector<double> prepare(const EmbeddingSet& emb, Similarity sim) {
  std::vector<double> rows = emb.values;
  if (sim == Similarity::kCosine) {
    for (std::size_t i = 0; i < emb.size(); ++i) {
      double* r = rows.data() + i * emb.dim;
      double ss = 0;
      for (std::size_t q = 0; q < emb.dim; ++q) ss += r[q] * r[q];
      const double norm = std::sqrt(ss);
      if (norm > 0)
        for (std::size_t q = 0; q < emb.dim; ++q) r[q] /= norm;
    }
  }
  return rows;
}

// Higher is better for both modes (negated squared distance for euclidean).
void scores_for(const std::vector<double>& rows, std::size_t n, std::size_t d, std::size_t query,
                Similarity sim, std::vector<double>& out) {
  const double* a = rows.data() + query * d;
  for (std::size_t j = 0; j < n; ++j) {
    const double* b = rows.data() + j * d;
    double s = 0;
    if (sim == Similarity::kCosine) {
      for (std::size_t q = 0; q < d; ++q) s += a[q] * b[q];
    } else {
      for (std::size_t q = 0; q < d; ++q) s -= (a[q] - b[q]) * (a[q] - b[q]);
    }
    out[j] = s;
  }
}

void rank(const std::vector<double>& scores, std::size_t query, std::vector<std::size_t>& order) {
  order.clear();
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != query) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return scores[x] > scores[y] || (scores[x] == scores[y] && x < y);
  });
}

}  // namespace

std::vector<std::size_t> rank_gallery(const EmbeddingSet& emb, std::size_t query, Similarity sim) {
  check(emb);
  if (query >= emb.size()) throw ParameterError("query index out of range");
  const auto rows = prepare(emb, sim);
  std::vector<double> scores(emb.size());
  scores_for(rows, emb.size(), emb.dim, query, sim, scores);
  std::vector<std::size_t> order;
  rank(scores, query, order);
  return order;
}

std::optional<double> average_precision(const EmbeddingSet& emb, std::size_t query, Similarity sim) {
  const auto order = rank_gallery(emb, query, sim);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (emb.labels[order[r]] != emb.labels[query]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

RetrievalScores retrieval_scores(const EmbeddingSet& emb, std::size_t k, Similarity sim) {
  check(emb);
  if (k == 0) throw ParameterError("precision@k needs k >= 1");
  const std::size_t n = emb.size();
  const auto rows = prepare(emb, sim);
  std::vector<double> scores(n);
  std::vector<std::size_t> order;
  const std::size_t kk = std::min(k, n - 1);
  double ap_sum = 0.0, pk_sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    scores_for(rows, n, emb.dim, i, sim, scores);
    rank(scores, i, order);
    const int label = emb.labels[i];
    std::size_t hits = 0, top = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (emb.labels[order[r]] != label) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (r < kk) ++top;
    }
    pk_sum += static_cast<double>(top) / static_cast<double>(kk);
    if (hits > 0) {
      ap_sum += precision_sum / static_cast<double>(hits);
      ++valid;
    }
  }
  RetrievalScores s;
  s.k = k;
  s.queries = valid;
  s.map = valid == 0 ? 0.0 : ap_sum / static_cast<double>(valid);
  s.precision_at_k = pk_sum / static_cast<double>(n);
  return s;
}

double mean_average_precision(const EmbeddingSet& emb, Similarity sim) {
  return retrieval_scores(emb, 1, sim).map;
}

double precision_at_k(const EmbeddingSet& emb, std::size_t k, Similarity sim) {
  return retrieval_scores(emb, k, sim).precision_at_k;
}

double accuracy_from_logits(const Tensor<float>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("logits " + to_string(logits.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    hits += static_cast<int>(best) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double accuracy(Model& model, const Dataset& data, std::size_t batch_size) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - i);
    Batch b = slice(data, i, count);
    hits += static_cast<std::size_t>(std::lround(accuracy_from_logits(predict_logits(model, b.images), b.labels) *
                                                 static_cast<double>(count)));
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

EmbeddingSet embed_dataset(Model& model, const Dataset& data, std::size_t batch_size) {
  EmbeddingSet e;
  e.labels = data.labels;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - i);
    Tensor<float> f = embed(model, slice(data, i, count).images);
    e.dim = f.dim(1);
    e.values.insert(e.values.end(), f.data().begin(), f.data().end());
  }
  return e;
}

double mi_divergence_measure(Model& teacher, Model& student, const Dataset& data, std::size_t batch_size) {
  if (batch_size < 2) throw ParameterError("L_MI batches need at least 2 samples");
  if (data.size() < 2) throw ParameterError("L_MI needs at least 2 samples");
  std::size_t full = data.size() / batch_size;
  const std::size_t size = full == 0 ? data.size() : batch_size;
  if (full == 0) full = 1;
  double total = 0.0;
  for (std::size_t b = 0; b < full; ++b) {
    Batch batch = slice(data, b * size, size);
    Tensor<float> ft = embed(teacher, batch.images);
    Tensor<float> fs = embed(student, batch.images);
    total += pkt_loss(ft.cast<double>(), fs.cast<double>()).value;
  }
  return total / static_cast<double>(full);
}

std::string EvalReport::to_key_value() const {
  std::ostringstream s;
  s << std::setprecision(6) << std::fixed;
  s << "samples=" << samples << "\n"
    << "map=" << map << "\n"
    << "precision_at_" << k << "=" << precision_at_k << "\n"
    << "accuracy=" << accuracy << "\n";
  if (mi_divergence) s << "mi_divergence=" << *mi_divergence << "\n" << "mi_batch_size=" << mi_batch_size << "\n";
  s << "parameters=" << parameters << "\n"
    << "latency_ms=" << latency_ms << "\n";
  return s.str();
}

std::string EvalReport::csv_header() {
  return "samples,map,precision_at_k,k,accuracy,mi_divergence,mi_batch_size,parameters,latency_ms";
}

std::string EvalReport::csv_row() const {
  std::ostringstream s;
  s << std::setprecision(8);
  s << samples << ',' << map << ',' << precision_at_k << ',' << k << ',' << accuracy << ',';
  if (mi_divergence) s << *mi_divergence;
  s << ',' << mi_batch_size << ',' << parameters << ',' << latency_ms;
  return s.str();
}

EvalReport evaluate_all(Model& student, Model* teacher, const Dataset& data, std::size_t k) {
  EvalReport r;
  r.samples = data.size();
  r.k = k;
  r.parameters = student.parameter_count();

  const auto start = std::chrono::steady_clock::now();
  std::size_t hits = 0;
  EmbeddingSet emb;
  emb.labels = data.labels;
  constexpr std::size_t kBatch = 256;
  for (std::size_t i = 0; i < data.size(); i += kBatch) {
    const std::size_t count = std::min(kBatch, data.size() - i);
    Batch b = slice(data, i, count);
    Tape<float> tape;
    auto out = student.forward(tape, b.images, {});
    const std::size_t last = student.spec().feature_layers();
    const Tensor<float>& f = out.features.at(last).value();
    emb.dim = f.dim(1);
    emb.values.insert(emb.values.end(), f.data().begin(), f.data().end());
    hits += static_cast<std::size_t>(
        std::lround(accuracy_from_logits(out.logits.value(), b.labels) * static_cast<double>(count)));
  }
  const auto stop = std::chrono::steady_clock::now();
  r.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());

  const RetrievalScores s = retrieval_scores(emb, k);
  r.map = s.map;
  r.precision_at_k = s.precision_at_k;
  if (teacher != nullptr) r.mi_divergence = mi_divergence_measure(*teacher, student, data);
  return r;
}

}  // namespace indistill
