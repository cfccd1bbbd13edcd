#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "indistill/tensor.hpp"

namespace indistill {

// Per-channel affine normalization, x' = (x - mean) / stddev.
struct ChannelNorm {
  std::vector<float> mean;
  std::vector<float> stddev;

  bool empty() const noexcept { return mean.empty(); }
  bool operator==(const ChannelNorm&) const = default;
};

struct Dataset {
  Tensor<float> images;  // [n, c, h, w]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string split;
  ChannelNorm norm;  // empty while images are raw [0, 1] values

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t sample_size() const { return images.size() / labels.size(); }
};

// Big-endian IDX pair: images magic 0x00000803 (n, h, w), labels 0x00000801 (n).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::string split = "train");
// Writes raw [0, 1] images back as bytes (round(v * 255)).
void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// CIFAR-10 binary batches: 3073-byte records (label, then 3 x 1024 planar pixels).
Dataset load_cifar_binary(std::span<const std::filesystem::path> files, std::string split = "train");
void save_cifar_binary(const Dataset& data, const std::filesystem::path& file);

struct BlobOptions {
  double noise = 0.35;
  double amplitude = 1.0;
};

// Class-conditional Gaussian blobs: each class has its own bump position per
// channel; labels are assigned round-robin.
Dataset synthetic_blobs(std::size_t n, std::size_t num_classes, std::size_t channels,
                        std::size_t height, std::size_t width, std::uint64_t seed,
                        BlobOptions options = {});

ChannelNorm compute_channel_norm(const Dataset& train);
void normalize(Dataset& data, const ChannelNorm& norm);
void denormalize(Dataset& data);

// Samples [first, first + count) in file order.
Dataset take(const Dataset& data, std::size_t count, std::size_t first = 0);

// Index batches for one epoch: a permutation seeded by (seed, epoch), cut into
// chunks of batch_size; the last short chunk is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch);

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
};

struct GatherOptions {
  bool horizontal_flip = false;  // random left-right flips, seeded
  std::uint64_t flip_seed = 0;
};

Batch gather(const Dataset& data, std::span<const std::size_t> indices,
             const GatherOptions& options = {});
// Contiguous slice [first, first + count) without shuffling, for evaluation.
Batch slice(const Dataset& data, std::size_t first, std::size_t count);

// Explicit setting wins, then $INDISTILL_DATA; empty when neither is set.
std::filesystem::path data_root(const std::string& configured = {});

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// "fashion-mnist" (IDX files train-/t10k-{images-idx3,labels-idx1}-ubyte) or
// "cifar10" (data_batch_{1..5}.bin, test_batch.bin), with train-split
// normalization applied to both. A cifar-10-batches-bin subdirectory is also
// searched.
DatasetPair load_named(const std::string& name, const std::filesystem::path& root);

}  // namespace indistill
