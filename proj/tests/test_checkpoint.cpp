#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "indistill/checkpoint.hpp"
#include "indistill/train.hpp"

namespace indistill {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint trained(std::uint64_t seed) {
  Dataset d = synthetic_blobs(32, 2, 1, 12, 12, 1);
  DistillConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.seed = seed;
  auto r = train_supervised(student_cnn({1, 12, 12}, 2, 2), d, c);
  Checkpoint ck{std::move(r.model), std::move(r.optimizer), "adam", 2, seed, c.hash(), {{"role", "teacher"}}};
  return ck;
}

class CheckpointTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("indistill_ckpt_" + std::to_string(::getpid()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  Checkpoint ck = trained(3);
  save_checkpoint(dir / "a.ckpt", ck);
  Checkpoint back = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(dir / "b.ckpt", back);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  EXPECT_EQ(back.model.spec(), ck.model.spec());
  EXPECT_EQ(back.optimizer, ck.optimizer);
  EXPECT_EQ(back.epoch, 2);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.metadata.at("role"), "teacher");

  Tensor<float> x(Shape{2, 1, 12, 12}, 0.3f);
  EXPECT_EQ(predict_logits(back.model, x), predict_logits(ck.model, x));
}

TEST_F(CheckpointTest, SameSeedSameBytes) {
  EXPECT_EQ(encode_checkpoint(trained(5)), encode_checkpoint(trained(5)));
  EXPECT_NE(encode_checkpoint(trained(5)), encode_checkpoint(trained(6)));
}

TEST_F(CheckpointTest, StartsWithMagicAndVersion) {
  const std::string b = encode_checkpoint(trained(1));
  EXPECT_EQ(b.substr(0, 4), "IDST");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), kCheckpointVersion);
  EXPECT_EQ(b[16], '{');
}

TEST_F(CheckpointTest, TruncatedFileRejected) {
  const std::string b = encode_checkpoint(trained(1));
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, b.size() / 2, b.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(b.substr(0, cut)), CheckpointError) << cut;
  }
  std::string flipped = b;
  flipped.back() ^= 0x1;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointError);
}

TEST_F(CheckpointTest, VersionMismatch) {
  std::string b = encode_checkpoint(trained(1));
  b[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(decode_checkpoint(b), CheckpointVersionError);
}

TEST_F(CheckpointTest, MissingFile) {
  EXPECT_THROW(load_checkpoint(dir / "nope.ckpt"), CheckpointError);
}

}  // namespace
}  // namespace indistill
