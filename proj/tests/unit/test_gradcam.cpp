#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "freezelab/dataset.hpp"
#include "freezelab/error.hpp"
#include "freezelab/gradcam.hpp"

using namespace freezelab;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Tensor t(std::move(s));
  for (double& v : t.mutable_values()) v = n(rng);
  return t;
}

Tensor constant_like(const Tensor& t, double v) {
  return Tensor(t.shape(), std::vector<double>(t.numel(), v));
}

const Dataset& small_set() {
  static const Dataset d = [] {
    SynthSpec s;
    s.num_images = 8;
    s.seed = 21;
    return gen_synth_detection_set(s);
  }();
  return d;
}

}  // namespace

TEST(GradcamMap, HandExample) {
  // Channel 1 lights the left column, channel 2 the right; gradients +1 and -1.
  Tensor a(Shape{2, 2, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  Tensor g(Shape{2, 2, 2}, {1, 1, 1, 1, -1, -1, -1, -1});
  const ActivationMap m = gradcam_map(a, g);
  EXPECT_EQ(m.height, 2u);
  EXPECT_EQ(m.width, 2u);
  EXPECT_EQ(m.values, (std::vector<double>{1, 0, 1, 0}));
  Tensor a4(Shape{1, 2, 2, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  EXPECT_EQ(gradcam_map(a4, g), m);
}

TEST(GradcamMap, ZeroGradientsGiveZeros) {
  const Tensor a = random_tensor({4, 3, 5}, 1);
  const ActivationMap m = gradcam_map(a, constant_like(a, 0.0));
  for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(GradcamMap, HomogeneousAndSubadditive) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor a = random_tensor({3, 4, 4}, seed);
    const Tensor g1 = random_tensor({3, 4, 4}, seed + 100), g2 = random_tensor({3, 4, 4}, seed + 200);
    const ActivationMap m1 = gradcam_map(a, g1), m2 = gradcam_map(a, g2);
    std::vector<double> scaled(g1.numel()), sum(g1.numel());
    for (std::size_t i = 0; i < g1.numel(); ++i) {
      scaled[i] = 2.5 * g1.values()[i];
      sum[i] = g1.values()[i] + g2.values()[i];
    }
    const ActivationMap ms = gradcam_map(a, Tensor(g1.shape(), scaled));
    const ActivationMap madd = gradcam_map(a, Tensor(g1.shape(), sum));
    for (std::size_t i = 0; i < m1.values.size(); ++i) {
      EXPECT_GE(m1.values[i], 0.0);
      EXPECT_NEAR(ms.values[i], 2.5 * m1.values[i], 1e-12);
      EXPECT_LE(madd.values[i], m1.values[i] + m2.values[i] + 1e-12);
    }
  }
}

TEST(GradcamMap, ShapeMismatch) {
  EXPECT_THROW(gradcam_map(Tensor(Shape{2, 3, 3}), Tensor(Shape{2, 3, 4})), ShapeError);
  EXPECT_THROW(gradcam_map(Tensor(Shape{2, 3, 3}), Tensor(Shape{3, 3, 3})), ShapeError);
  EXPECT_THROW(gradcam_map(Tensor(Shape{3, 3}), Tensor(Shape{3, 3})), ShapeError);
  EXPECT_THROW(gradcam_map(Tensor(Shape{2, 1, 3, 3}), Tensor(Shape{2, 1, 3, 3})), ShapeError);
}

TEST(Capture, UntrainedModelGivesFeatureSizedMap) {
  const Model m = build_model(4, 2, 42);
  const Tensor img = preprocess(small_set().images[0], 64);
  const CamCapture a = capture_gradcam(m, img);
  const CamCapture b = capture_gradcam(m, img);
  EXPECT_EQ(a.map, b.map);
  // Block 8 sits at stride 32.
  EXPECT_EQ(a.map.height, 2u);
  EXPECT_EQ(a.map.width, 2u);
  for (double v : a.map.values) EXPECT_GE(v, 0.0);
  EXPECT_GT(a.target.score, 0.0);
  EXPECT_LT(a.target.score, 1.0);
  const CamCapture early = capture_gradcam(m, img, 2, 1);
  EXPECT_EQ(early.map.height, 16u);
  EXPECT_EQ(early.target.class_id, 1);
}

TEST(Capture, RejectsNonConvolutionalBlocks) {
  const Model m = build_model(4, 2, 42);
  const Tensor img = preprocess(small_set().images[0], 64);
  EXPECT_THROW(capture_gradcam(m, img, 10), Error);
  EXPECT_THROW(capture_gradcam(m, img, 14), Error);
  EXPECT_THROW(capture_gradcam(m, img, 23), Error);
  EXPECT_THROW(capture_gradcam(m, img, 8, 2), Error);
  EXPECT_THROW(capture_gradcam(m, Tensor(Shape{1, 3, 64, 64}), 8), ShapeError);
  EXPECT_NO_THROW(check_cam_block(m, 9));
  EXPECT_NO_THROW(check_cam_block(m, 0));
}

TEST(Milestones, ShortRunHasFirstAndBest) {
  const Dataset& d = small_set();
  const std::vector<std::size_t> tr{0, 1, 2, 3, 4, 5}, va{6, 7};
  const auto train_s = to_samples(d, tr, 64), val_s = to_samples(d, va, 64);
  Model m = build_model(2, 2, 3);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 3;
  c.lr0 = 5e-3;
  MilestoneRecorder rec(val_s[0].image);
  TrainHooks h;
  std::size_t chained = 0;
  h.on_epoch_end = [&](std::size_t, const Model&, bool) { ++chained; };
  rec.attach(h);
  const TrainReport r = train(m, train_s, val_s, c, make_freeze_plan(m, 0), h);
  EXPECT_EQ(chained, r.epochs.size());
  const auto ms = rec.milestones();
  ASSERT_EQ(ms.size(), 2u);
  EXPECT_EQ(ms[0].tag, "epoch_1");
  EXPECT_EQ(ms[0].epoch, 1u);
  EXPECT_EQ(ms[1].tag, "best");
  EXPECT_EQ(ms[1].epoch, r.best_epoch + 1);
}

TEST(Milestones, TenthEpochAndLatestBest) {
  const Model m = build_model(2, 2, 3);
  MilestoneRecorder rec(preprocess(small_set().images[1], 64));
  for (std::size_t e = 0; e < 12; ++e) rec.on_epoch_end(e, m, e == 0 || e == 4);
  const auto ms = rec.milestones();
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(ms[1].tag, "epoch_10");
  EXPECT_EQ(ms[1].epoch, 10u);
  EXPECT_EQ(ms[2].epoch, 5u);
}

TEST(Pgm, QuantizeExamples) {
  const ActivationMap m{2, 2, {0, 1, 2, 4}};
  EXPECT_EQ(quantize_map(m), (std::vector<std::uint8_t>{0, 63, 127, 255}));
  const ActivationMap flat{1, 3, {2, 2, 2}};
  EXPECT_EQ(quantize_map(flat), (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Pgm, RoundTripAndMilestoneIndex) {
  const fs::path dir = fs::temp_directory_path() / "freezelab_pgm";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const ActivationMap m{2, 3, {0, 0.5, 1, 1.5, 2, 2.5}};
  render_pgm(m, (dir / "a.pgm").string());
  const GrayImage g = read_pgm((dir / "a.pgm").string());
  EXPECT_EQ(g.width, 3u);
  EXPECT_EQ(g.height, 2u);
  EXPECT_EQ(g.pixels, quantize_map(m));

  const nlohmann::json idx = write_milestones({{"epoch_1", 1, m}, {"best", 4, m}}, (dir / "ms").string());
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx[1].at("milestone"), "best");
  EXPECT_EQ(idx[1].at("epoch"), 4);
  EXPECT_TRUE(fs::exists(dir / "ms" / "best.pgm"));
  EXPECT_TRUE(fs::exists(dir / "ms" / "milestones.json"));

  std::ofstream(dir / "bad.pgm") << "P5\n1 1\n65535\n";
  EXPECT_THROW(read_pgm((dir / "bad.pgm").string()), ParseError);
  fs::remove_all(dir);
}
