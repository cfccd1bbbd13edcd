#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "indistill/data.hpp"

namespace indistill {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("indistill_data_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// two 2x3 images, labels 7 and 1
std::vector<unsigned char> idx_images() {
  return {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,
          0, 255, 128, 1, 2, 3,
          10, 20, 30, 40, 50, 60};
}
std::vector<unsigned char> idx_labels() { return {0, 0, 8, 1, 0, 0, 0, 2, 7, 1}; }

TEST(LoadIdx, FixtureRoundTrip) {
  TempDir dir;
  write_bytes(dir.path() / "img", idx_images());
  write_bytes(dir.path() / "lbl", idx_labels());
  Dataset d = load_idx(dir.path() / "img", dir.path() / "lbl");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.images.shape(), (Shape{2, 1, 2, 3}));
  EXPECT_EQ(d.labels, (std::vector<int>{7, 1}));
  EXPECT_EQ(d.num_classes, 10u);
  EXPECT_FLOAT_EQ(d.images[1], 1.0f);
  EXPECT_FLOAT_EQ(d.images[2], 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(d.images[11], 60.0f / 255.0f);

  save_idx(d, dir.path() / "img2", dir.path() / "lbl2");
  EXPECT_EQ(read_bytes(dir.path() / "img2"), idx_images());
  EXPECT_EQ(read_bytes(dir.path() / "lbl2"), idx_labels());
}

TEST(LoadIdx, CountMismatch) {
  TempDir dir;
  write_bytes(dir.path() / "img", idx_images());
  auto lbl = idx_labels();
  lbl[7] = 3;
  lbl.push_back(0);
  write_bytes(dir.path() / "lbl", lbl);
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl"), DataError);
}

TEST(LoadIdx, BadMagicAndTruncation) {
  TempDir dir;
  auto img = idx_images();
  img[3] = 4;
  write_bytes(dir.path() / "img", img);
  write_bytes(dir.path() / "lbl", idx_labels());
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl"), DataError);
  img = idx_images();
  img.pop_back();
  write_bytes(dir.path() / "img", img);
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl"), DataError);
  EXPECT_THROW(load_idx(dir.path() / "missing", dir.path() / "lbl"), DataError);
}

TEST(LoadCifar, SingleRecord) {
  TempDir dir;
  std::vector<unsigned char> rec(3073);
  rec[0] = 6;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<unsigned char>(i * 7);
  write_bytes(dir.path() / "b.bin", rec);
  const fs::path files[] = {dir.path() / "b.bin"};
  Dataset d = load_cifar_binary(files);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.images.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(d.labels[0], 6);
  EXPECT_FLOAT_EQ(d.images[0], rec[1] / 255.0f);
  EXPECT_FLOAT_EQ(d.images[3071], rec[3072] / 255.0f);
  save_cifar_binary(d, dir.path() / "c.bin");
  EXPECT_EQ(read_bytes(dir.path() / "c.bin"), rec);
}

TEST(LoadCifar, Truncated) {
  TempDir dir;
  write_bytes(dir.path() / "b.bin", std::vector<unsigned char>(3072));
  const fs::path files[] = {dir.path() / "b.bin"};
  EXPECT_THROW(load_cifar_binary(files), DataError);
}

TEST(SyntheticBlobs, DeterministicAndBalanced) {
  Dataset a = synthetic_blobs(201, 3, 2, 8, 8, 5), b = synthetic_blobs(201, 3, 2, 8, 8, 5);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  std::vector<int> counts(3);
  for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (int c : counts) EXPECT_NEAR(c, 67, 1);
  EXPECT_FALSE(synthetic_blobs(201, 3, 2, 8, 8, 6).images == a.images);
}

TEST(Batches, PartitionAndReproducible) {
  for (std::size_t n : {1u, 7u, 128u, 300u}) {
    auto e1 = batches(n, 128, 9, 1);
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < e1.size(); ++i) {
      if (i + 1 < e1.size()) EXPECT_EQ(e1[i].size(), 128u);
      all.insert(all.end(), e1[i].begin(), e1[i].end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
    EXPECT_EQ(batches(n, 128, 9, 1), e1);
  }
  EXPECT_NE(batches(300, 400, 9, 1), batches(300, 400, 9, 2));
  EXPECT_EQ(batches(300, 400, 9, 1).size(), 1u);
}

TEST(Normalization, InverseRecoversRaw) {
  Dataset d = synthetic_blobs(50, 2, 3, 6, 6, 1);
  const Tensor<float> raw = d.images;
  const ChannelNorm norm = compute_channel_norm(d);
  normalize(d, norm);
  EXPECT_EQ(d.norm, norm);
  // each channel now has mean ~0 and unit variance
  const ChannelNorm after = compute_channel_norm(d);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(after.mean[c], 0.0, 1e-5);
    EXPECT_NEAR(after.stddev[c], 1.0, 1e-4);
  }
  denormalize(d);
  for (std::size_t i = 0; i < raw.size(); ++i) ASSERT_NEAR(d.images[i], raw[i], 1e-6);
}

TEST(Gather, FlipIsOffByDefault) {
  Dataset d = synthetic_blobs(4, 2, 1, 3, 3, 2);
  const std::size_t idx[] = {2, 0};
  Batch b = gather(d, idx);
  for (std::size_t q = 0; q < 9; ++q) EXPECT_EQ(b.images[q], d.images[18 + q]);
  EXPECT_EQ(b.labels, (std::vector<int>{0, 0}));

  const std::size_t one[] = {1};
  bool flipped = false;
  for (std::uint64_t s = 0; s < 8 && !flipped; ++s) {
    Batch f = gather(d, one, {true, s});
    flipped = f.images[0] == d.images[9 + 2] && f.images[2] == d.images[9 + 0];
  }
  EXPECT_TRUE(flipped);
}

TEST(DataRoot, ConfigOverridesEnvironment) {
  ::setenv("INDISTILL_DATA", "/from/env", 1);
  EXPECT_EQ(data_root(), fs::path("/from/env"));
  EXPECT_EQ(data_root("/from/config"), fs::path("/from/config"));
  ::unsetenv("INDISTILL_DATA");
  EXPECT_TRUE(data_root().empty());
}

TEST(LoadNamed, UnknownAndMissing) {
  EXPECT_THROW(load_named("cub200", "/tmp"), ConfigError);
  EXPECT_THROW(load_named("fashion-mnist", "/nonexistent/dir"), DataError);
}

#ifdef INDISTILL_DATA_DIR
TEST(LoadNamed, FashionMnistSplit) {
  if (!fs::exists(fs::path(INDISTILL_DATA_DIR) / "train-images-idx3-ubyte")) GTEST_SKIP() << "no dataset";
  auto p = load_named("fashion-mnist", INDISTILL_DATA_DIR);
  EXPECT_EQ(p.train.size(), 60000u);
  EXPECT_EQ(p.test.size(), 10000u);
  EXPECT_EQ(p.train.images.shape(), (Shape{60000, 1, 28, 28}));
  EXPECT_EQ(p.train.num_classes, 10u);
}
#endif

}  // namespace
}  // namespace indistill
