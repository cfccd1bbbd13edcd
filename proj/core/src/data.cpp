#include "indistill/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>

#include "indistill/random.hpp"

namespace indistill {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
}

std::size_t count_classes(const std::vector<int>& labels) {
  int hi = 0;
  for (int l : labels) hi = std::max(hi, l);
  return std::max<std::size_t>(10, static_cast<std::size_t>(hi) + 1);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::string split) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.size() < 16 || be32(ib, 0) != 0x00000803) {
    throw DataError(images.string() + ": not an IDX image file (magic 0x00000803)");
  }
  if (lb.size() < 8 || be32(lb, 0) != 0x00000801) {
    throw DataError(labels.string() + ": not an IDX label file (magic 0x00000801)");
  }
  const std::size_t n = be32(ib, 4), h = be32(ib, 8), w = be32(ib, 12);
  const std::size_t nl = be32(lb, 4);
  if (n != nl) {
    throw DataError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(nl) + " labels");
  }
  if (n == 0 || h == 0 || w == 0) throw DataError(images.string() + ": empty IDX file");
  if (ib.size() != 16 + n * h * w) throw DataError(images.string() + ": truncated or oversized");
  if (lb.size() != 8 + n) throw DataError(labels.string() + ": truncated or oversized");

  Dataset d;
  d.split = std::move(split);
  d.images = Tensor<float>(Shape{n, 1, h, w});
  for (std::size_t i = 0; i < n * h * w; ++i) d.images[i] = static_cast<float>(ib[16 + i]) / 255.0f;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = lb[8 + i];
  d.num_classes = count_classes(d.labels);
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (data.channels() != 1) throw DataError("IDX holds single-channel images only");
  std::vector<unsigned char> ib, lb;
  put_be32(ib, 0x00000803);
  put_be32(ib, static_cast<std::uint32_t>(data.size()));
  put_be32(ib, static_cast<std::uint32_t>(data.height()));
  put_be32(ib, static_cast<std::uint32_t>(data.width()));
  for (float v : data.images.data()) ib.push_back(to_byte(v));
  put_be32(lb, 0x00000801);
  put_be32(lb, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lb.push_back(static_cast<unsigned char>(l));
  write_file(images, ib);
  write_file(labels, lb);
}

Dataset load_cifar_binary(std::span<const std::filesystem::path> files, std::string split) {
  constexpr std::size_t kRecord = 3073, kPixels = 3072;
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : files) {
    const auto b = read_file(f);
    if (b.empty() || b.size() % kRecord != 0) {
      throw DataError(f.string() + ": length " + std::to_string(b.size()) +
                      " is not a multiple of 3073");
    }
    for (std::size_t r = 0; r < b.size() / kRecord; ++r) {
      const unsigned char* rec = b.data() + r * kRecord;
      if (rec[0] > 9) throw DataError(f.string() + ": label byte out of range");
      labels.push_back(rec[0]);
      for (std::size_t q = 0; q < kPixels; ++q) pixels.push_back(static_cast<float>(rec[1 + q]) / 255.0f);
    }
  }
  if (labels.empty()) throw DataError("no CIFAR files given");
  Dataset d;
  d.split = std::move(split);
  d.images = Tensor<float>(Shape{labels.size(), 3, 32, 32}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = 10;
  return d;
}

void save_cifar_binary(const Dataset& data, const std::filesystem::path& file) {
  if (data.channels() != 3 || data.height() != 32 || data.width() != 32) {
    throw DataError("CIFAR records hold 3x32x32 images");
  }
  std::vector<unsigned char> b;
  const std::size_t per = data.sample_size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    b.push_back(static_cast<unsigned char>(data.labels[i]));
    for (std::size_t q = 0; q < per; ++q) b.push_back(to_byte(data.images[i * per + q]));
  }
  write_file(file, b);
}

Dataset synthetic_blobs(std::size_t n, std::size_t num_classes, std::size_t channels,
                        std::size_t height, std::size_t width, std::uint64_t seed,
                        BlobOptions options) {
  if (n == 0 || num_classes < 2 || channels == 0 || height == 0 || width == 0) {
    throw ParameterError("synthetic_blobs: need n > 0, at least 2 classes and positive extents");
  }
  Rng rng(seed);
  // bump centre per (class, channel), fixed for the dataset
  std::vector<double> cy(num_classes * channels), cx(num_classes * channels);
  for (std::size_t k = 0; k < num_classes * channels; ++k) {
    cy[k] = rng.uniform(0.2, 0.8) * static_cast<double>(height - 1);
    cx[k] = rng.uniform(0.2, 0.8) * static_cast<double>(width - 1);
  }
  const double sigma = std::max(1.0, 0.15 * static_cast<double>(std::min(height, width)));
  Dataset d;
  d.split = "synthetic";
  d.num_classes = num_classes;
  d.images = Tensor<float>(Shape{n, channels, height, width});
  d.labels.resize(n);
  float* px = d.images.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % num_classes;
    d.labels[i] = static_cast<int>(cls);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t k = cls * channels + c;
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double dy = static_cast<double>(y) - cy[k], dx = static_cast<double>(x) - cx[k];
          const double bump = options.amplitude * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
          *px++ = static_cast<float>(bump + options.noise * rng.normal());
        }
    }
  }
  return d;
}

ChannelNorm compute_channel_norm(const Dataset& train) {
  const std::size_t n = train.size(), c = train.channels();
  const std::size_t hw = train.height() * train.width();
  ChannelNorm norm;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = train.images.data().data() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) s += p[q], ss += double(p[q]) * p[q];
    }
    const double count = static_cast<double>(n * hw);
    const double mean = s / count;
    const double var = std::max(0.0, ss / count - mean * mean);
    norm.mean.push_back(static_cast<float>(mean));
    norm.stddev.push_back(static_cast<float>(std::max(std::sqrt(var), 1e-6)));
  }
  return norm;
}

void normalize(Dataset& data, const ChannelNorm& norm) {
  if (!data.norm.empty()) throw DataError("dataset is already normalized");
  if (norm.mean.size() != data.channels() || norm.stddev.size() != data.channels()) {
    throw DataError("normalization has " + std::to_string(norm.mean.size()) +
                    " channels, dataset has " + std::to_string(data.channels()));
  }
  const std::size_t c = data.channels(), hw = data.height() * data.width();
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = data.images.data().data() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) p[q] = (p[q] - norm.mean[ch]) / norm.stddev[ch];
    }
  data.norm = norm;
}

void denormalize(Dataset& data) {
  if (data.norm.empty()) return;
  const std::size_t c = data.channels(), hw = data.height() * data.width();
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = data.images.data().data() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) p[q] = p[q] * data.norm.stddev[ch] + data.norm.mean[ch];
    }
  data.norm = {};
}

Dataset take(const Dataset& data, std::size_t count, std::size_t first) {
  if (count == 0 || first + count > data.size()) {
    throw DataError("cannot take " + std::to_string(count) + " samples from offset " +
                    std::to_string(first) + " of " + std::to_string(data.size()));
  }
  Dataset out;
  out.split = data.split;
  out.num_classes = data.num_classes;
  out.norm = data.norm;
  Shape s = data.images.shape();
  s[0] = count;
  const std::size_t per = data.sample_size();
  const auto begin = data.images.storage().begin() + static_cast<std::ptrdiff_t>(first * per);
  out.images = Tensor<float>(s, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * per)));
  out.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    data.labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch) {
  if (n == 0 || batch_size == 0) throw ParameterError("batches: n and batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices, const GatherOptions& options) {
  if (indices.empty()) throw ParameterError("gather: empty index list");
  Shape s = data.images.shape();
  s[0] = indices.size();
  Batch b{Tensor<float>(s), {}};
  const std::size_t per = data.sample_size(), w = data.width();
  Rng rng(options.flip_seed);
  float* dst = b.images.data().data();
  for (std::size_t idx : indices) {
    if (idx >= data.size()) throw ParameterError("gather: index " + std::to_string(idx) + " out of range");
    const float* src = data.images.data().data() + idx * per;
    const bool flip = options.horizontal_flip && rng.below(2) == 1;
    if (!flip) {
      std::copy_n(src, per, dst);
    } else {
      for (std::size_t row = 0; row < per / w; ++row)
        std::reverse_copy(src + row * w, src + (row + 1) * w, dst + row * w);
    }
    dst += per;
    b.labels.push_back(data.labels[idx]);
  }
  return b;
}

Batch slice(const Dataset& data, std::size_t first, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return gather(data, idx);
}

std::filesystem::path data_root(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("INDISTILL_DATA"); env != nullptr && *env != '\0') return env;
  return {};
}

DatasetPair load_named(const std::string& name, const std::filesystem::path& root) {
  if (root.empty()) throw DataError("no data root: set data_root or INDISTILL_DATA");
  DatasetPair p;
  if (name == "fashion-mnist" || name == "mnist") {
    p.train = load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", "train");
    p.test = load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte", "test");
  } else if (name == "cifar10") {
    std::filesystem::path dir = root;
    if (!std::filesystem::exists(dir / "test_batch.bin") &&
        std::filesystem::exists(root / "cifar-10-batches-bin")) {
      dir = root / "cifar-10-batches-bin";
    }
    std::vector<std::filesystem::path> train_files;
    for (int i = 1; i <= 5; ++i) train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    const std::filesystem::path test_file = dir / "test_batch.bin";
    p.train = load_cifar_binary(train_files, "train");
    p.test = load_cifar_binary(std::span(&test_file, 1), "test");
  } else {
    throw ConfigError("unknown dataset '" + name + "' (expected fashion-mnist or cifar10)");
  }
  const ChannelNorm norm = compute_channel_norm(p.train);
  normalize(p.train, norm);
  normalize(p.test, norm);
  return p;
}

}  // namespace indistill
