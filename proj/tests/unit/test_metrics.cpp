#include <gtest/gtest.h>

#include <random>

#include "freezelab/error.hpp"
#include "freezelab/metrics.hpp"
#include "oracles.hpp"

using namespace freezelab;

TEST(Iou, Examples) {
  const Box a{0, 0, 2, 2}, b{1, 1, 3, 3}, far{5, 5, 6, 6};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, far), 0.0);
  EXPECT_NEAR(iou(a, b), 1.0 / 7.0, 1e-15);
  EXPECT_EQ(iou(Box{1, 1, 1, 1}, Box{1, 1, 1, 1}), 0.0);
  EXPECT_EQ(iou(a, b), iou(b, a));
}

TEST(Nms, Examples) {
  // IoU 0.9 between these two.
  const Box b1{0, 0, 10, 10}, b2{0, 0, 10, 9};
  ASSERT_NEAR(iou(b1, b2), 0.9, 1e-12);
  std::vector<Detection> same{{b2, 0, 0.8}, {b1, 0, 0.9}};
  const auto kept = nms(same);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].confidence, 0.9);
  std::vector<Detection> diff{{b1, 0, 0.9}, {b2, 1, 0.8}};
  EXPECT_EQ(nms(diff).size(), 2u);
  const Box c{0, 0, 10, 5};  // IoU 0.5 with b1
  std::vector<Detection> low{{b1, 0, 0.9}, {c, 0, 0.8}};
  EXPECT_EQ(nms(low).size(), 2u);
  EXPECT_THROW(nms(low, 0.0), Error);
}

TEST(Nms, SuppressesOnlyStrictlyAboveThreshold) {
  const Box a{0, 0, 10, 10}, b{0, 0, 10, 7};  // IoU exactly 0.7
  ASSERT_EQ(iou(a, b), 0.7);
  std::vector<Detection> d{{a, 0, 0.9}, {b, 0, 0.8}};
  EXPECT_EQ(nms(d, 0.7).size(), 2u);
}

TEST(Nms, SubsetIdempotentAndSeparated) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    const oracle::Scene s = oracle::micro_scene(rng);
    for (const auto& dets : s.dets) {
      const auto kept = nms(dets);
      EXPECT_EQ(nms(kept).size(), kept.size());
      for (std::size_t a = 0; a < kept.size(); ++a) {
        bool found = false;
        for (const auto& d : dets) found = found || (d.box == kept[a].box && d.confidence == kept[a].confidence);
        EXPECT_TRUE(found);
        if (a > 0) {
          EXPECT_GE(kept[a - 1].confidence, kept[a].confidence);
        }
        for (std::size_t b = a + 1; b < kept.size(); ++b) {
          if (kept[a].class_id == kept[b].class_id) {
            EXPECT_LE(iou(kept[a].box, kept[b].box), 0.7);
          }
        }
      }
    }
  }
}

TEST(Ap, Examples) {
  const GtBox g{{0, 0, 10, 10}, 0};
  std::vector<Detection> perfect{{g.box, 0, 0.9}};
  std::vector<GtBox> one{g};
  EXPECT_EQ(average_precision(perfect, one, 0.5), 1.0);
  EXPECT_EQ(average_precision(std::vector<Detection>{}, one, 0.5), 0.0);
  std::vector<Detection> fp_then_tp{{{50, 50, 60, 60}, 0, 0.9}, {g.box, 0, 0.8}};
  EXPECT_NEAR(average_precision(fp_then_tp, one, 0.5), 0.5, 1e-12);
  EXPECT_EQ(average_precision(perfect, std::vector<GtBox>{}, 0.5), 0.0);
}

TEST(Ap, AddingAnIsolatedTopTruePositiveNeverHurts) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 300; ++i) {
    oracle::Scene s = oracle::micro_scene(rng);
    for (int cls = 0; cls < 2; ++cls) {
      const double before = average_precision(s.dets, s.gts, cls, 0.5);
      oracle::Scene more = s;
      const Box far{1000, 1000, 1010, 1010};
      more.gts[0].push_back({far, cls});
      more.dets[0].push_back({far, cls, 2.0});
      EXPECT_GE(average_precision(more.dets, more.gts, cls, 0.5), before - 1e-12);
    }
  }
}

TEST(Evaluate, PerfectAndEmpty) {
  std::vector<std::vector<GtBox>> gts{{{{0, 0, 4, 4}, 0}, {{10, 10, 20, 20}, 1}}, {{{2, 2, 9, 9}, 1}}};
  std::vector<std::vector<Detection>> perfect(2);
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (const auto& g : gts[i]) perfect[i].push_back({g.box, g.class_id, 0.9});
  const EvalResult r = evaluate(perfect, gts, 2);
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_EQ(r.map5095, 1.0);
  const EvalResult e = evaluate({}, gts, 2);
  EXPECT_EQ(e.map50, 0.0);
  EXPECT_EQ(e.map5095, 0.0);
  EXPECT_THROW(evaluate(perfect, gts, 0), Error);
}

TEST(Evaluate, ConfidenceFilterAndAbsentClasses) {
  std::vector<std::vector<GtBox>> gts{{{{0, 0, 4, 4}, 0}}};
  std::vector<std::vector<Detection>> low{{{{0, 0, 4, 4}, 0, 0.49}}};
  EXPECT_EQ(evaluate(low, gts, 3).map50, 0.0);
  std::vector<std::vector<Detection>> ok{{{{0, 0, 4, 4}, 0, 0.5}}};
  const EvalResult r = evaluate(ok, gts, 3);
  EXPECT_EQ(r.map50, 1.0);
  ASSERT_EQ(r.per_class.size(), 1u);
}

TEST(Evaluate, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const oracle::Scene s = oracle::micro_scene(rng);
    const EvalResult r = evaluate(s.dets, s.gts, 2);
    const oracle::OracleEval o = oracle::brute_evaluate(s, 2, 0.5, 0.7);
    EXPECT_NEAR(r.map50, o.map50, 1e-9) << "scene " << i;
    EXPECT_NEAR(r.map5095, o.map5095, 1e-9) << "scene " << i;
    EXPECT_LE(r.map5095, r.map50 + 1e-12);
    EXPECT_GE(r.map50, 0.0);
    EXPECT_LE(r.map50, 1.0);
  }
}

TEST(Evaluate, ImageOrderInvariant) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    oracle::Scene s = oracle::micro_scene(rng);
    const EvalResult a = evaluate(s.dets, s.gts, 2);
    std::reverse(s.dets.begin(), s.dets.end());
    std::reverse(s.gts.begin(), s.gts.end());
    const EvalResult b = evaluate(s.dets, s.gts, 2);
    // Ties across images may reorder, which can move AP; without ties it cannot.
    bool ties = false;
    std::vector<double> confs;
    for (const auto& d : s.dets)
      for (const auto& x : d) confs.push_back(x.confidence);
    std::sort(confs.begin(), confs.end());
    ties = std::adjacent_find(confs.begin(), confs.end()) != confs.end();
    if (!ties) {
      EXPECT_NEAR(a.map5095, b.map5095, 1e-12);
    }
  }
}

TEST(Evaluate, NmsFreeFlagSkipsSuppression) {
  const Box b1{0, 0, 10, 10}, b2{0, 0, 10, 9.5};
  std::vector<std::vector<GtBox>> gts{{{b1, 0}, {b2, 0}}};
  std::vector<std::vector<Detection>> d{{{b1, 0, 0.9}, {b2, 0, 0.8}}};
  EvalOptions free;
  free.apply_nms = false;
  EXPECT_EQ(evaluate(d, gts, 1, free).map50, 1.0);
  EXPECT_LT(evaluate(d, gts, 1).map50, 1.0);
}

TEST(Evaluate, JsonShape) {
  std::vector<std::vector<GtBox>> gts{{{{0, 0, 4, 4}, 1}}};
  const nlohmann::json j = to_json(evaluate({}, gts, 2));
  EXPECT_EQ(j.at("classes").size(), 1u);
  EXPECT_TRUE(j.at("classes")[0].at("ap").contains("0.50"));
  EXPECT_TRUE(j.at("classes")[0].at("ap").contains("0.95"));
}
