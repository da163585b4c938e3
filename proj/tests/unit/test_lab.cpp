#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "freezelab/dataset.hpp"
#include "freezelab/error.hpp"

using namespace freezelab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freezelab_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

std::vector<Label> random_labels(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.3);
  std::vector<Label> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<int>(i % 3), snap_coord(c(rng)), snap_coord(c(rng)),
                   snap_coord(s(rng)), snap_coord(s(rng))});
  }
  return out;
}

// Image i holds one box per class listed in classes[i].
DatasetManifest manifest_with(const std::vector<std::vector<int>>& classes, std::size_t num_classes) {
  DatasetManifest m;
  for (std::size_t c = 0; c < num_classes; ++c) m.class_names.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    m.images.push_back({"img" + std::to_string(i), 10, 10});
    std::vector<Label> ls;
    for (int c : classes[i]) ls.push_back({c, 0.5, 0.5, 0.2, 0.2});
    m.labels.push_back(ls);
  }
  return m;
}

}  // namespace

TEST(YoloLabels, ParseExamples) {
  const fs::path d = temp_dir("labels");
  {
    std::ofstream(d / "a.txt") << "0 0.5 0.5 1 1\n";
    std::ofstream(d / "empty.txt") << "";
    std::ofstream(d / "bad.txt") << "0 0.5 0.5 1.5 1\n";
  }
  const auto a = load_yolo_labels((d / "a.txt").string(), 100, 100);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].first, 0);
  EXPECT_EQ(a[0].second, (Box{0, 0, 100, 100}));
  EXPECT_TRUE(load_yolo_labels((d / "empty.txt").string(), 100, 100).empty());
  try {
    load_yolo_labels((d / "bad.txt").string(), 100, 100);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_THROW(parse_yolo_labels("0 0.5 0.5 0.1 0.1\n-1 0.5 0.5 0.1 0.1\n", "x"), ParseError);
  EXPECT_THROW(parse_yolo_labels("0 0.5 abc 0.1 0.1\n", "x"), ParseError);
  EXPECT_THROW(parse_yolo_labels("0 0.5 0.5 0.1\n", "x"), ParseError);
  fs::remove_all(d);
}

TEST(YoloLabels, FormatRoundTrip) {
  const auto ls = random_labels(3, 6);
  EXPECT_EQ(parse_yolo_labels(format_yolo_labels(ls), "mem"), ls);
}

TEST(Split, SizesDisjointExhaustive) {
  const DatasetManifest m = manifest_with(std::vector<std::vector<int>>(10, {0}), 1);
  const Splits s = split_dataset(m, {0.7, 0.2, 0.1}, 1);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.val.size(), 1u);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  all.insert(all.end(), s.val.begin(), s.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(Split, DeterministicAndValidated) {
  const DatasetManifest m = manifest_with(std::vector<std::vector<int>>(23, {0}), 1);
  const Splits a = split_dataset(m, {0.7, 0.15, 0.15}, 9), b = split_dataset(m, {0.7, 0.15, 0.15}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_THROW(split_dataset(m, {0.7, 0.2, 0.2}, 1), Error);
  EXPECT_THROW(split_dataset(m, {0.8, 0.2, 0.0}, 1), Error);
}

TEST(Split, StratifiesTwoBalancedClasses) {
  std::vector<std::vector<int>> cls;
  for (int i = 0; i < 100; ++i) cls.push_back({i % 2});
  const DatasetManifest m = manifest_with(cls, 2);
  const Splits s = split_dataset(m, {0.7, 0.2, 0.1}, 3);
  for (const auto* part : {&s.train, &s.test, &s.val}) {
    std::size_t c0 = 0;
    for (std::size_t i : *part) c0 += cls[i][0] == 0;
    const double half = part->size() / 2.0;
    EXPECT_LE(std::abs(static_cast<double>(c0) - half), 1.0);
  }
}

TEST(Split, PerClassErrorWithinOneImageForSingleLabelImages) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<int>> cls;
    std::uniform_int_distribution<int> c(0, 3), n(1, 3);
    for (int i = 0; i < 60; ++i) cls.push_back(std::vector<int>(n(rng), c(rng)));
    const DatasetManifest m = manifest_with(cls, 4);
    const std::array<double, 3> r{0.7, 0.2, 0.1};
    const Splits s = split_dataset(m, r, static_cast<std::uint64_t>(trial));
    const std::vector<std::size_t>* parts[] = {&s.train, &s.test, &s.val};
    for (int k = 0; k < 4; ++k) {
      std::size_t total = 0;
      for (const auto& v : cls) total += std::count(v.begin(), v.end(), k) > 0;
      for (std::size_t j = 0; j < 3; ++j) {
        std::size_t got = 0;
        for (std::size_t i : *parts[j]) got += std::count(cls[i].begin(), cls[i].end(), k) > 0;
        EXPECT_LE(std::abs(static_cast<double>(got) - r[j] * total), 1.0 + 1e-9)
            << "class " << k << " split " << j;
      }
    }
  }
}

TEST(Augment, InvolutionsAreExact) {
  const Image img = random_image(13, 9, 1);
  const auto ls = random_labels(2, 5);
  for (AugmentOp op : {AugmentOp::hflip, AugmentOp::vflip}) {
    auto once = augment(img, ls, op, 0);
    auto twice = augment(once.first, once.second, op, 0);
    EXPECT_EQ(twice.first, img);
    EXPECT_EQ(twice.second, ls);
  }
  std::pair<Image, std::vector<Label>> r{img, ls};
  for (int i = 0; i < 4; ++i) r = augment(r.first, r.second, AugmentOp::rotate90, 0);
  EXPECT_EQ(r.first, img);
  EXPECT_EQ(r.second, ls);
}

TEST(Augment, GeometricLabels) {
  const Image img = random_image(8, 8, 1);
  const std::vector<Label> l{{0, 0.3, 0.25, 0.2, 0.1}};
  EXPECT_DOUBLE_EQ(augment(img, l, AugmentOp::hflip, 0).second[0].cx, 0.7);
  // Clockwise turn: a box near the top moves to the right edge.
  const Label r = augment(img, l, AugmentOp::rotate90, 0).second[0];
  EXPECT_DOUBLE_EQ(r.cx, 0.75);
  EXPECT_DOUBLE_EQ(r.cy, 0.3);
  EXPECT_DOUBLE_EQ(r.w, 0.1);
  EXPECT_DOUBLE_EQ(r.h, 0.2);
}

TEST(Augment, RotatedPixelsFollowTheLabels) {
  Image img(8, 8, 0.0);
  img.at(1, 0, 0) = 1.0;  // top row, left part
  const Image out = augment(img, {}, AugmentOp::rotate90, 0).first;
  EXPECT_EQ(out.at(7, 1, 0), 1.0);
}

TEST(Augment, PhotometricKeepsLabelsAndIsSeeded) {
  const Image img = random_image(16, 16, 3);
  const auto ls = random_labels(4, 3);
  for (AugmentOp op : {AugmentOp::gaussian_blur, AugmentOp::gaussian_noise}) {
    const auto a = augment(img, ls, op, 11), b = augment(img, ls, op, 11);
    EXPECT_EQ(a.second, ls);
    EXPECT_EQ(a.first, b.first);
    EXPECT_NE(a.first, img);
  }
  EXPECT_NE(augment(img, ls, AugmentOp::gaussian_noise, 1).first,
            augment(img, ls, AugmentOp::gaussian_noise, 2).first);
}

TEST(Augment, NoiseMeanShiftIsSmall) {
  const Image img(64, 64, 0.5);
  const Image out = augment(img, {}, AugmentOp::gaussian_noise, 42).first;
  double shift = 0;
  for (std::size_t i = 0; i < out.data.size(); ++i) shift += out.data[i] - img.data[i];
  EXPECT_LT(std::abs(shift / out.data.size()), 0.01);
}

TEST(Augment, CropKeepsValidLabels) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Image img = random_image(40, 30, seed);
    const auto ls = random_labels(seed, 4);
    const auto [out, labels] = augment(img, ls, AugmentOp::random_crop, seed);
    EXPECT_LE(out.width, 40u);
    EXPECT_LE(out.height, 30u);
    EXPECT_FALSE(labels.empty());
    for (const Label& l : labels) {
      EXPECT_GT(l.w, 0);
      EXPECT_GT(l.h, 0);
      // Coordinates are snapped independently, hence the slack.
      EXPECT_GE(l.cx - l.w / 2, -1e-6);
      EXPECT_LE(l.cx + l.w / 2, 1 + 1e-6);
    }
  }
}

TEST(Augment, DatasetVariant) {
  SynthSpec s;
  s.num_images = 4;
  const Dataset d = gen_synth_detection_set(s);
  const AugmentOp ops[] = {AugmentOp::hflip, AugmentOp::gaussian_noise};
  const Dataset a = augment_dataset(d, ops, 3);
  EXPECT_EQ(a.images.size(), 12u);
  EXPECT_TRUE(a.manifest.augmented);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.images[i], d.images[i]);
  EXPECT_THROW(parse_augment_op("shear"), Error);
}

TEST(Synth, CountsBoundsDeterminism) {
  SynthSpec s;
  s.num_images = 50;
  s.seed = 8;
  const Dataset a = gen_synth_detection_set(s), b = gen_synth_detection_set(s);
  ASSERT_EQ(a.images.size(), 50u);
  ASSERT_EQ(a.manifest.labels.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.images[i], b.images[i]);
    EXPECT_EQ(a.manifest.labels[i], b.manifest.labels[i]);
    EXPECT_GE(a.manifest.labels[i].size(), s.min_objects);
    EXPECT_LE(a.manifest.labels[i].size(), s.max_objects);
    for (const Label& l : a.manifest.labels[i]) {
      EXPECT_GE(l.cx - l.w / 2, 0.0);
      EXPECT_LE(l.cx + l.w / 2, 1.0);
      EXPECT_GE(l.cy - l.h / 2, 0.0);
      EXPECT_LE(l.cy + l.h / 2, 1.0);
      EXPECT_LT(static_cast<std::size_t>(l.class_id), s.num_classes);
    }
  }
  s.seed = 9;
  EXPECT_NE(gen_synth_detection_set(s).images[0], a.images[0]);
  s.num_classes = kMaxSynthClasses + 1;
  EXPECT_THROW(gen_synth_detection_set(s), Error);
}

TEST(Synth, SpecFromJson) {
  const SynthSpec s = synth_spec_from_json({{"num_images", 5}, {"seed", 3}, {"domain", 1}});
  EXPECT_EQ(s.num_images, 5u);
  EXPECT_EQ(s.domain, 1);
  EXPECT_THROW(synth_spec_from_json({{"images", 5}}), ParseError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  SynthSpec s;
  s.num_images = 6;
  Dataset d = gen_synth_detection_set(s);
  d.manifest.splits = split_dataset(d.manifest, {0.5, 0.25, 0.25}, 1);
  const fs::path dir = temp_dir("dataset");
  save_dataset(d, dir.string());
  const Dataset r = load_dataset(dir.string());
  EXPECT_EQ(r.manifest.class_names, d.manifest.class_names);
  ASSERT_EQ(r.images.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.images[i], d.images[i]);
    EXPECT_EQ(r.manifest.labels[i], d.manifest.labels[i]);
  }
  ASSERT_TRUE(r.manifest.splits.has_value());
  EXPECT_EQ(r.manifest.splits->train, d.manifest.splits->train);
  EXPECT_FALSE(r.manifest.augmented);
  EXPECT_THROW(load_dataset((dir / "missing").string()), IoError);
  fs::remove_all(dir);
}

TEST(Histogram, Examples) {
  const ClassHistogram a = class_histogram(manifest_with({{0, 1}}, 2));
  EXPECT_EQ(a.images_per_class[0] + a.images_per_class[1], 2u);
  const ClassHistogram b = class_histogram(manifest_with({{0, 0, 0}}, 2));
  EXPECT_EQ(b.instances_per_class[0], 3u);
  EXPECT_EQ(b.images_per_class[0], 1u);
  EXPECT_EQ(b.images_per_class[1], 0u);
}

TEST(Histogram, MatchesDoubleLoop) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> c(0, 4), n(0, 5);
  std::vector<std::vector<int>> cls(40);
  for (auto& v : cls)
    for (int k = n(rng); k > 0; --k) v.push_back(c(rng));
  const ClassHistogram h = class_histogram(manifest_with(cls, 5));
  for (int k = 0; k < 5; ++k) {
    std::size_t imgs = 0, inst = 0;
    for (const auto& v : cls) {
      bool seen = false;
      for (int x : v) {
        if (x == k) {
          ++inst;
          seen = true;
        }
      }
      imgs += seen;
    }
    EXPECT_EQ(h.images_per_class[k], imgs);
    EXPECT_EQ(h.instances_per_class[k], inst);
  }
}

TEST(Preprocess, NormalizationAndResize) {
  Image red(64, 64, 0.0);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      red.at(x, y, 0) = 0.485;
      red.at(x, y, 1) = 0.456 + 0.224;
    }
  const Tensor t = preprocess(red, 64);
  EXPECT_EQ(t.shape(), (Shape{3, 64, 64}));
  EXPECT_NEAR(t.values()[0], 0.0, 1e-12);
  EXPECT_NEAR(t.values()[64 * 64], 1.0, 1e-12);

  const Image img = random_image(32, 32, 4);
  const Tensor same = preprocess(img, 32);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        EXPECT_EQ(same.values()[(c * 32 + y) * 32 + x],
                  (img.at(x, y, c) - kImageNetMean[c]) / kImageNetStd[c]);
  EXPECT_EQ(preprocess(img, 64).shape(), (Shape{3, 64, 64}));
}

TEST(Ppm, RoundTripOfQuantizedImage) {
  Image img = random_image(7, 5, 9);
  quantize(img);
  const fs::path dir = temp_dir("ppm");
  write_ppm(img, (dir / "a.ppm").string());
  EXPECT_EQ(read_ppm((dir / "a.ppm").string()), img);
  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(read_ppm((dir / "bad.ppm").string()), ParseError);
  fs::remove_all(dir);
}
