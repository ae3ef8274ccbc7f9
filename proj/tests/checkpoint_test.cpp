#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "lulc/checkpoint.hpp"
#include "test_util.hpp"

namespace lulc {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CheckpointManifest manifest() {
  CheckpointManifest m;
  m.target_class = LulcClass::Water;
  m.mode = TrainMode::Grid;
  m.epoch = 3;
  m.epochs = 100;
  m.seed = 1234567890123ull;
  m.learning_rate = 0.01;
  m.batch_size = 8;
  m.metrics = {{"train_accuracy", 0.5}};
  return m;
}

TEST(Sha256, KnownVector) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({abc.begin(), abc.end()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = testing::scratch_dir("ckpt_rt");
  const Fcn8Model model = Fcn8Model::init(21, 1.0 / 16);
  save_checkpoint(make_checkpoint(model, manifest()), dir / "m.ckpt");
  const Checkpoint cp = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(cp.manifest.target_class, LulcClass::Water);
  EXPECT_EQ(cp.manifest.mode, TrainMode::Grid);
  EXPECT_EQ(cp.manifest.epoch, 3);
  EXPECT_EQ(cp.manifest.seed, 1234567890123ull);
  EXPECT_EQ(cp.manifest.architecture, model.architecture_name());
  EXPECT_EQ(cp.manifest.metrics.at("train_accuracy"), 0.5);
  const Fcn8Model back = model_from_checkpoint(cp);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    EXPECT_EQ(back.layers()[i].weight, model.layers()[i].weight) << model.layers()[i].name;
    EXPECT_EQ(back.layers()[i].bias, model.layers()[i].bias);
  }
  // Saving the reloaded model reproduces the file byte for byte.
  save_checkpoint(make_checkpoint(back, cp.manifest), dir / "again.ckpt");
  EXPECT_EQ(read_all(dir / "m.ckpt"), read_all(dir / "again.ckpt"));
}

TEST(Checkpoint, HeaderLayout) {
  const auto dir = testing::scratch_dir("ckpt_header");
  save_checkpoint(make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest()), dir / "m.ckpt");
  const auto bytes = read_all(dir / "m.ckpt");
  ASSERT_GT(bytes.size(), 14u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "FCN8CKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);
  const std::size_t len = bytes[10] | (bytes[11] << 8) | (bytes[12] << 16) | (std::size_t{bytes[13]} << 24);
  const auto j = nlohmann::json::parse(bytes.begin() + 14, bytes.begin() + 14 + static_cast<std::ptrdiff_t>(len));
  EXPECT_EQ(j.at("class"), "water");
  EXPECT_EQ(j.at("blobs")[0].at("name"), "conv1_1.weight");
  std::size_t payload = 0;
  for (const auto& b : j.at("blobs")) payload += b.at("bytes").get<std::size_t>();
  EXPECT_EQ(bytes.size(), 14 + len + payload);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const auto dir = testing::scratch_dir("ckpt_trunc");
  save_checkpoint(make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest()), dir / "m.ckpt");
  auto bytes = read_all(dir / "m.ckpt");
  bytes.resize(bytes.size() - 100);
  write_all(dir / "m.ckpt", bytes);
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HashMismatch);
  }
}

TEST(Checkpoint, FlippedBitIsRejected) {
  const auto dir = testing::scratch_dir("ckpt_flip");
  save_checkpoint(make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest()), dir / "m.ckpt");
  auto bytes = read_all(dir / "m.ckpt");
  bytes[bytes.size() - 5] ^= 0x10;
  write_all(dir / "m.ckpt", bytes);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), Error);
}

TEST(Checkpoint, UnknownVersion) {
  const auto dir = testing::scratch_dir("ckpt_version");
  save_checkpoint(make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest()), dir / "m.ckpt");
  auto bytes = read_all(dir / "m.ckpt");
  bytes[8] = 2;
  write_all(dir / "m.ckpt", bytes);
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaVersionUnknown);
  }
}

TEST(Checkpoint, NotACheckpoint) {
  const auto dir = testing::scratch_dir("ckpt_magic");
  write_all(dir / "x.ckpt", std::vector<std::uint8_t>(64, 7));
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(Checkpoint, ClassMismatchWarning) {
  const Checkpoint cp = make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest());
  EXPECT_FALSE(class_mismatch_warning(cp, LulcClass::Water));
  const auto w = class_mismatch_warning(cp, LulcClass::Forest);
  ASSERT_TRUE(w);
  EXPECT_NE(w->find("water"), std::string::npos);
  EXPECT_NE(w->find("forest"), std::string::npos);
}

TEST(Checkpoint, WidthMismatchIsShapeMismatch) {
  Checkpoint cp = make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest());
  cp.manifest.width_multiplier = 0.125;
  try {
    model_from_checkpoint(cp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Checkpoint, PartialWeightsLoadByName) {
  const Checkpoint full = make_checkpoint(Fcn8Model::init(1, 1.0 / 16), manifest());
  Checkpoint encoder;
  for (const auto& b : full.blobs)
    if (b.name.rfind("conv", 0) == 0) encoder.blobs.push_back(b);
  Fcn8Model m = Fcn8Model::init(2, 1.0 / 16);
  EXPECT_EQ(load_matching_weights(m, encoder), 26u);  // 13 convs, weight + bias
  EXPECT_EQ(m.layer("conv1_1").weight, full.blobs[0].tensor);
  EXPECT_NE(m.layer("fc6").weight, Fcn8Model::init(1, 1.0 / 16).layer("fc6").weight);
}

}  // namespace
}  // namespace lulc
