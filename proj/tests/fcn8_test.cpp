#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lulc/fcn8.hpp"
#include "test_util.hpp"

namespace lulc {
namespace {

constexpr double kSmall = 1.0 / 16.0;

Tensor<float> random_batch(std::size_t n, std::mt19937_64& rng) {
  std::vector<RgbRaster> rasters;
  for (std::size_t i = 0; i < n; ++i) rasters.push_back(testing::random_raster(224, 224, rng));
  return rasters_to_tensor<float>(rasters);
}

TEST(Architecture, LayerIndicesAndNames) {
  const Fcn8Model m = Fcn8Model::architecture(kSmall);
  ASSERT_EQ(m.layers().size(), 43u);
  EXPECT_EQ(m.layers()[kPool3Layer].name, "pool3");
  EXPECT_EQ(m.layers()[kPool4Layer].name, "pool4");
  EXPECT_EQ(m.layers()[kPool5Layer].name, "pool5");
  EXPECT_EQ(m.layers().back().name, "upscore8");
  EXPECT_EQ(m.layer("fc6").kernel, 7);
  EXPECT_EQ(m.layer("upscore8").stride, 8);
  EXPECT_EQ(m.architecture_name(), "fcn8-vgg16 width=0.0625");
}

TEST(Architecture, WidthMultiplierScalesChannels) {
  const Fcn8Model full = Fcn8Model::architecture(1.0);
  EXPECT_EQ(full.layer("conv1_1").out_ch, 64);
  EXPECT_EQ(full.layer("conv5_3").out_ch, 512);
  EXPECT_EQ(full.layer("fc6").out_ch, 4096);
  const Fcn8Model small = Fcn8Model::architecture(kSmall);
  EXPECT_EQ(small.layer("conv1_1").out_ch, 4);
  EXPECT_EQ(small.layer("fc7").out_ch, 256);
  EXPECT_EQ(small.layer("score_pool3").in_ch, 16);
  // Full-width VGG-16 FCN-8 with a 2-way head: ~134M parameters.
  EXPECT_GT(full.parameter_count(), 130'000'000u);
  EXPECT_LT(full.parameter_count(), 140'000'000u);
}

TEST(Architecture, RejectsOtherWidths) {
  for (double m : {0.0, 0.3, 2.0, 1.0 / 32}) {
    try {
      validate_width_multiplier(m);
      FAIL() << m;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
    }
  }
}

TEST(Forward, ShapesAndSkipResolutions) {
  std::mt19937_64 rng(50);
  const Fcn8Model m = Fcn8Model::init(1, kSmall);
  const auto pass = m.forward_train(random_batch(2, rng));
  EXPECT_EQ(pass.logits.shape(), (Shape{2, 2, 224, 224}));
  EXPECT_EQ(pass.caches[kPool3Layer].out_shape, (Shape{2, 16, 28, 28}));
  EXPECT_EQ(pass.caches[kPool4Layer].out_shape, (Shape{2, 32, 14, 14}));
  EXPECT_EQ(pass.caches[kPool5Layer].out_shape, (Shape{2, 32, 7, 7}));
  EXPECT_TRUE(pass.logits.all_finite());
}

TEST(Forward, FullWidthShape) {
  std::mt19937_64 rng(51);
  const Fcn8Model m = Fcn8Model::init(1, 1.0);
  const Tensor<float> out = m.forward(random_batch(1, rng));
  EXPECT_EQ(out.shape(), (Shape{1, 2, 224, 224}));
  EXPECT_TRUE(out.all_finite());
}

TEST(Forward, RejectsOtherInputSizes) {
  const Fcn8Model m = Fcn8Model::init(1, kSmall);
  EXPECT_THROW(m.forward(Tensor<float>({1, 3, 200, 224})), Error);
  EXPECT_THROW(m.forward(Tensor<float>({1, 4, 224, 224})), Error);
}

TEST(Forward, ItemsAreIndependentAndThreadCountInvariant) {
  std::mt19937_64 rng(52);
  Fcn8Model m = Fcn8Model::init(3, kSmall);
  // Non-zero score layers so the outputs actually depend on the input.
  for (auto& l : m.layers())
    if (l.name.rfind("score_", 0) == 0)
      for (auto& w : l.weight.values()) w = static_cast<float>(rng() % 200) / 1000.0f - 0.1f;
  const Tensor<float> batch = random_batch(3, rng);
  const Tensor<float> joint = m.forward(batch, 1);
  EXPECT_EQ(m.forward(batch, 3), joint);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor<float> alone = m.forward(batch.slice(i, i + 1));
    for (std::size_t k = 0; k < alone.size(); ++k)
      ASSERT_NEAR(alone.values()[k], joint.item(i)[k], 1e-4f) << i;
  }
}

TEST(Init, SameSeedSameParameters) {
  const Fcn8Model a = Fcn8Model::init(77, kSmall), b = Fcn8Model::init(77, kSmall);
  const Fcn8Model c = Fcn8Model::init(78, kSmall);
  bool differs = false;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    EXPECT_EQ(a.layers()[i].weight, b.layers()[i].weight);
    EXPECT_EQ(a.layers()[i].bias, b.layers()[i].bias);
    differs |= a.layers()[i].weight != c.layers()[i].weight;
  }
  EXPECT_TRUE(differs);
}

TEST(Init, HeScaleAndZeroScores) {
  const Fcn8Model m = Fcn8Model::init(5, 0.25);
  const auto& w = m.layer("conv3_1").weight;  // fan-in 32*9
  double sq = 0;
  for (float v : w.values()) sq += double(v) * v;
  const double var = sq / static_cast<double>(w.size());
  EXPECT_NEAR(var, 2.0 / (32 * 9), 0.1 * 2.0 / (32 * 9));
  for (const char* name : {"score_fr", "score_pool4", "score_pool3"})
    for (float v : m.layer(name).weight.values()) ASSERT_EQ(v, 0.0f) << name;
}

TEST(Init, BilinearUpsamplingPreservesConstants) {
  const Fcn8Model m = Fcn8Model::init(5, kSmall);
  for (const char* name : {"upscore2", "upscore_pool4", "upscore8"}) {
    const auto& l = m.layer(name);
    const Tensor<float> out = layer_infer(l, Tensor<float>({1, 2, 6, 6}, 1.0f));
    // Away from the border every output sums the kernel taps of a full
    // neighbourhood, which for a bilinear kernel is exactly 1.
    const std::size_t margin = static_cast<std::size_t>(l.kernel);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = margin; y + margin < out.shape().h; ++y)
        for (std::size_t x = margin; x + margin < out.shape().w; ++x)
          ASSERT_NEAR(out(0, c, y, x), 1.0f, 1e-6f) << name;
  }
}

TEST(Loss, InitialLossIsLogTwo) {
  std::mt19937_64 rng(53);
  const Fcn8Model m = Fcn8Model::init(1, kSmall);
  const Tensor<float> logits = m.forward(random_batch(2, rng));
  for (float v : logits.values()) ASSERT_EQ(v, 0.0f);
  std::vector<BinaryMask> masks = {testing::random_mask(224, 224, rng),
                                   testing::random_mask(224, 224, rng)};
  const auto r = softmax_cross_entropy(logits, masks);
  EXPECT_NEAR(r.loss, std::numbers::ln2, 1e-9);
  EXPECT_EQ(r.counted, count_scored_pixels(masks));
}

TEST(Loss, GradientIsSoftmaxMinusOneHot) {
  const Tensor<double> logits({1, 2, 1, 3}, std::vector<double>{0.0, 1.0, -2.0, 1.0, 0.0, 3.0});
  BinaryMask mask(3, 1);
  mask.set(0, 0, MaskValue::Target);
  mask.set(1, 0, MaskValue::Other);
  mask.set(2, 0, MaskValue::Ignore);
  const auto r = softmax_cross_entropy(logits, std::span<const BinaryMask>(&mask, 1));
  const double p1_first = 1.0 / (1.0 + std::exp(-1.0));  // target prob at pixel 0
  const double p1_second = 1.0 / (1.0 + std::exp(1.0));  // target prob at pixel 1
  const double expected = (-std::log(p1_first) - std::log(1.0 - p1_second)) / 2.0;
  EXPECT_NEAR(r.loss, expected, 1e-12);
  EXPECT_NEAR(r.grad(0, 1, 0, 0), (p1_first - 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.grad(0, 0, 0, 0), (1.0 - p1_first) / 2.0, 1e-12);
  EXPECT_NEAR(r.grad(0, 1, 0, 1), p1_second / 2.0, 1e-12);
  EXPECT_EQ(r.grad(0, 0, 0, 2), 0.0);
  EXPECT_EQ(r.grad(0, 1, 0, 2), 0.0);
  // Per pixel the two channel gradients cancel: softmax sums to one.
  for (std::size_t x = 0; x < 3; ++x) EXPECT_NEAR(r.grad(0, 0, 0, x) + r.grad(0, 1, 0, x), 0.0, 1e-15);
}

TEST(Loss, AllIgnoredThrows) {
  const Tensor<float> logits({1, 2, 2, 2});
  const BinaryMask mask(2, 2, MaskValue::Ignore);
  try {
    softmax_cross_entropy(logits, std::span<const BinaryMask>(&mask, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllPixelsIgnored);
  }
}

TEST(Argmax, TiesGoToOther) {
  const Tensor<float> logits({1, 2, 1, 3}, std::vector<float>{0, 1, 2, 0, 2, 1});
  const BinaryMask m = argmax_mask(logits, 0);
  EXPECT_EQ(m.at(0, 0), MaskValue::Other);
  EXPECT_EQ(m.at(1, 0), MaskValue::Target);
  EXPECT_EQ(m.at(2, 0), MaskValue::Other);
}

TEST(Backward, WholeModelFiniteDifferences) {
  std::mt19937_64 rng(54);
  BasicFcn8<double> m = Fcn8Model::init(9, kSmall).cast<double>();
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& l : m.layers())
    if (l.name.rfind("score_", 0) == 0)
      for (auto& w : l.weight.values()) w = u(rng);
  const Tensor<double> x = random_batch(1, rng).cast<double>();
  const BinaryMask mask = testing::random_mask(224, 224, rng);
  const std::span<const BinaryMask> masks(&mask, 1);

  const auto pass = m.forward_train(x);
  const auto loss = softmax_cross_entropy(pass.logits, masks);
  Gradients<double> g = m.zero_gradients();
  m.backward(pass, loss.grad, g);

  auto objective = [&] { return softmax_cross_entropy(m.forward(x), masks).loss; };
  constexpr double kEps = 1e-6;  // larger steps cross ReLU and pooling kinks
  for (const char* name : {"conv1_1", "conv3_2", "fc6", "score_fr", "score_pool4", "score_pool3",
                           "upscore2", "upscore8"}) {
    std::size_t li = 0;
    while (m.layers()[li].name != name) ++li;
    auto& w = m.layers()[li].weight;
    for (int probe = 0; probe < 3; ++probe) {
      const std::size_t k = rng() % w.size();
      const double keep = w.values()[k];
      w.values()[k] = keep + kEps;
      const double up = objective();
      w.values()[k] = keep - kEps;
      const double down = objective();
      w.values()[k] = keep;
      const double numeric = (up - down) / (2 * kEps);
      const double analytic = g.weight[li].values()[k];
      EXPECT_NEAR(analytic, numeric, 1e-6 + 1e-3 * std::abs(numeric)) << name << "[" << k << "]";
    }
  }
}

TEST(Backward, OneSgdStepLowersLoss) {
  std::mt19937_64 rng(55);
  Fcn8Model m = Fcn8Model::init(11, kSmall);
  const Tensor<float> x = random_batch(2, rng);
  std::vector<BinaryMask> masks = {testing::random_mask(224, 224, rng),
                                   testing::random_mask(224, 224, rng)};
  const auto pass = m.forward_train(x);
  const auto before = softmax_cross_entropy(pass.logits, masks);
  Gradients<float> g = m.zero_gradients();
  m.backward(pass, before.grad, g);
  m.sgd_step(g, 1e-4f);
  const auto after = softmax_cross_entropy(m.forward(x), masks);
  EXPECT_LT(after.loss, before.loss);
  // The pass was taken before the update.
  Gradients<float> again = m.zero_gradients();
  EXPECT_THROW(m.backward(pass, before.grad, again), Error);
}

}  // namespace
}  // namespace lulc
