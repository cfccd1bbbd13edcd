#include "indistill/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "indistill/models.hpp"

namespace indistill {

template <typename Real>
std::vector<double> filter_l1_scores(const Tensor<Real>& kernel) {
  if (kernel.rank() != 4) {
    throw DimensionError("filter_l1_scores: kernel must be [n_in, n_out, k, k], got " +
                         to_string(kernel.shape()));
  }
  const std::size_t n_in = kernel.dim(0), n_out = kernel.dim(1);
  const std::size_t spatial = kernel.dim(2) * kernel.dim(3);
  std::vector<double> scores(n_out, 0.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_in; ++j) {
      const Real* f = kernel.data().data() + (j * n_out + i) * spatial;
      for (std::size_t q = 0; q < spatial; ++q) s += std::abs(static_cast<double>(f[q]));
    }
    scores[i] = s;
  }
  return scores;
}

template <typename Real>
ChannelSelection prune(const Tensor<Real>& kernel, std::size_t p, std::size_t layer_index) {
  ChannelSelection sel;
  sel.layer_index = layer_index;
  sel.scores = filter_l1_scores(kernel);
  const std::size_t n_out = sel.scores.size();
  if (p >= n_out) {
    throw ParameterError("prune: p = " + std::to_string(p) + " must be below the filter count " +
                         std::to_string(n_out));
  }
  std::vector<std::size_t> order(n_out);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sel.scores[a] < sel.scores[b]; });
  sel.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(p), order.end());
  std::sort(sel.kept.begin(), sel.kept.end());
  return sel;
}

template <typename Real>
Tensor<Real> select_channels(const Tensor<Real>& feature, const ChannelSelection& selection) {
  if (feature.rank() < 2 || feature.dim(1) != selection.original_channels()) {
    throw DimensionError("select_channels: feature map " + to_string(feature.shape()) +
                         " does not have " + std::to_string(selection.original_channels()) +
                         " channels on axis 1");
  }
  const std::size_t n = feature.dim(0), c = feature.dim(1);
  const std::size_t inner = feature.size() / (n * c);
  Shape out_shape = feature.shape();
  out_shape[1] = selection.kept.size();
  Tensor<Real> out(out_shape);
  Real* dst = out.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch : selection.kept) {
      const Real* src = feature.data().data() + (b * c + ch) * inner;
      dst = std::copy_n(src, inner, dst);
    }
  return out;
}

std::size_t pruned_count(std::size_t channels, double pruning_rate) {
  const double exact = pruning_rate * static_cast<double>(channels);
  const double rounded = std::round(exact);
  if (pruning_rate < 0.0 || pruning_rate >= 1.0 || std::abs(exact - rounded) > 1e-9 * (1.0 + exact)) {
    throw ConfigError("pruning rate " + std::to_string(pruning_rate) + " does not remove a whole "
                      "number of the " + std::to_string(channels) + " channels");
  }
  return static_cast<std::size_t>(rounded);
}

std::vector<ChannelSelection> prune_model(const Model& model, double pruning_rate) {
  std::vector<ChannelSelection> out;
  const std::size_t last = model.spec().feature_layers();
  for (std::size_t l = 1; l < last; ++l) {
    Tensor<float> bank = model.filter_bank(l);
    out.push_back(prune(bank, pruned_count(bank.dim(1), pruning_rate), l));
  }
  return out;
}

ChannelSelection leading_channels(std::size_t channels, std::size_t keep, std::size_t layer_index) {
  if (keep == 0 || keep > channels) {
    throw ParameterError("leading_channels: cannot keep " + std::to_string(keep) + " of " +
                         std::to_string(channels));
  }
  ChannelSelection sel;
  sel.layer_index = layer_index;
  sel.scores.assign(channels, 0.0);
  sel.kept.resize(keep);
  std::iota(sel.kept.begin(), sel.kept.end(), 0);
  return sel;
}

template std::vector<double> filter_l1_scores(const Tensor<float>&);
template std::vector<double> filter_l1_scores(const Tensor<double>&);
template ChannelSelection prune(const Tensor<float>&, std::size_t, std::size_t);
template ChannelSelection prune(const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> select_channels(const Tensor<float>&, const ChannelSelection&);
template Tensor<double> select_channels(const Tensor<double>&, const ChannelSelection&);

}  // namespace indistill
