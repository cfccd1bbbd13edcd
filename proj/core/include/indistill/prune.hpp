#pragma once

#include <cstddef>
#include <vector>

#include "indistill/tensor.hpp"

namespace indistill {

class Model;

// Channels of one layer that survive L1-norm filter pruning.
struct ChannelSelection {
  std::size_t layer_index = 0;
  std::vector<std::size_t> kept;  // ascending original indices
  std::vector<double> scores;     // L1 norm of every original filter

  std::size_t original_channels() const noexcept { return scores.size(); }
  bool operator==(const ChannelSelection&) const = default;
};

// scores[i] = sum_{j, l, m} |K[j, i, l, m]| for a kernel laid out as
// [n_in, n_out, k, k].
template <typename Real>
std::vector<double> filter_l1_scores(const Tensor<Real>& kernel);

// Drops the p filters with the smallest L1 scores; equal scores drop the
// lower original index first. Kept indices are returned in original order.
template <typename Real>
ChannelSelection prune(const Tensor<Real>& kernel, std::size_t p, std::size_t layer_index = 0);

// Gathers the kept channels (axis 1) of an [N, C, ...] or [N, C] map.
template <typename Real>
Tensor<Real> select_channels(const Tensor<Real>& feature, const ChannelSelection& selection);

// p = q * n, which must be an integer.
std::size_t pruned_count(std::size_t channels, double pruning_rate);

// Selections for the intermediate feature layers 1..L-1 of a frozen model,
// each pruned at rate q.
std::vector<ChannelSelection> prune_model(const Model& model, double pruning_rate);

// First `keep` channels of `channels`, no scoring. Width alignment without
// pruning, for the unpruned-teacher ablation.
ChannelSelection leading_channels(std::size_t channels, std::size_t keep,
                                  std::size_t layer_index = 0);

}  // namespace indistill
