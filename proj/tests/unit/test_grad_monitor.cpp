#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "freezelab/error.hpp"
#include "freezelab/grad_monitor.hpp"
#include "oracles.hpp"

using namespace freezelab;

namespace {

GradMap random_grads(std::mt19937_64& rng, std::size_t count) {
  GradMap g;
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::normal_distribution<double> nd(0, 3);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = len(rng);
    std::vector<double> v(n);
    for (double& x : v) x = nd(rng);
    Tensor t(Shape{n}, std::move(v));
    g.emplace(t.id(), t);
  }
  return g;
}

}  // namespace

TEST(BatchNorm, Examples) {
  Tensor a(Shape{1}, std::vector<double>{3.0}), b(Shape{1}, std::vector<double>{4.0});
  EXPECT_EQ(batch_grad_norm({{a.id(), a}, {b.id(), b}}), 5.0);
  Tensor z(Shape{4});
  EXPECT_EQ(batch_grad_norm({{z.id(), z}}), 0.0);
  EXPECT_EQ(batch_grad_norm({}), 0.0);
}

TEST(BatchNorm, MatchesFlattenOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const GradMap g = random_grads(rng, 10);
    EXPECT_NEAR(batch_grad_norm(g), oracle::flat_norm(g), 1e-12);
  }
}

TEST(BatchNorm, GroupingInvariant) {
  std::mt19937_64 rng(2);
  const GradMap g = random_grads(rng, 6);
  std::vector<double> flat;
  for (const auto& [id, t] : g) flat.insert(flat.end(), t.values().begin(), t.values().end());
  Tensor one(Shape{flat.size()}, flat);
  EXPECT_NEAR(batch_grad_norm(g), batch_grad_norm({{one.id(), one}}), 1e-12);
}

TEST(EpochMean, Examples) {
  const std::vector<double> a{0, 2, 4}, b{5}, c{0, 0}, d{};
  EXPECT_EQ(epoch_mean_norm(a), 3.0);
  EXPECT_EQ(epoch_mean_norm(b), 5.0);
  EXPECT_FALSE(epoch_mean_norm(c).has_value());
  EXPECT_FALSE(epoch_mean_norm(d).has_value());
  std::vector<double> e{1.5, 2.5};
  const double before = *epoch_mean_norm(e);
  e.insert(e.end(), {0, 0, 0});
  EXPECT_EQ(*epoch_mean_norm(e), before);
}

TEST(Stats, Examples) {
  const std::vector<double> k{7, 7, 7}, two{1, 3};
  EXPECT_EQ(grad_stats(k).std, 0.0);
  EXPECT_EQ(grad_stats(k).cv_percent, 0.0);
  const GradStats s = grad_stats(two);
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.std, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.cv_percent, 70.7106781, 1e-6);
  EXPECT_THROW(grad_stats(std::vector<double>{}), Error);
  EXPECT_NEAR(100.0 * 122384 / 140671, 87.0, 0.05);
}

TEST(Stats, CvIsScaleInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 10);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> s(12), t(12);
    const double c = u(rng);
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = u(rng);
      t[j] = c * s[j];
    }
    EXPECT_NEAR(grad_stats(s).cv_percent, grad_stats(t).cv_percent, 1e-9);
  }
}

TEST(FreezeHealth, ThresholdIsStrict) {
  std::vector<double> base(20, 2.0);
  auto at = [&](double r) {
    std::vector<double> frozen(20, 2.0 * r);
    return freeze_health(frozen, base);
  };
  EXPECT_EQ(at(0.57).verdict, Verdict::at_risk);
  EXPECT_EQ(at(0.69).verdict, Verdict::ok);
  EXPECT_EQ(at(0.60).verdict, Verdict::ok);
  EXPECT_EQ(at(0.60).ratios.size(), 20u);
}

TEST(FreezeHealth, UsesOnlyTheFirstTwentySteps) {
  std::vector<double> base(30, 1.0), frozen(20, 0.7);
  frozen.resize(30, 0.0);
  EXPECT_EQ(freeze_health(frozen, base).verdict, Verdict::ok);
  EXPECT_NEAR(freeze_health(frozen, base).mean_ratio, 0.7, 1e-12);
}

TEST(FreezeHealth, Errors) {
  std::vector<double> short_(19, 1.0), ok(20, 1.0), zero(20, 1.0);
  zero[7] = 0;
  EXPECT_THROW(freeze_health(short_, ok), Error);
  EXPECT_THROW(freeze_health(ok, short_), Error);
  EXPECT_THROW(freeze_health(ok, zero), Error);
}

TEST(BudgetWarning, Rule) {
  EXPECT_TRUE(freeze_budget_warning(66.5, true).has_value());
  EXPECT_TRUE(freeze_budget_warning(50.0, true).has_value());
  EXPECT_FALSE(freeze_budget_warning(49.999, true).has_value());
  EXPECT_FALSE(freeze_budget_warning(35.1, true).has_value());
  EXPECT_FALSE(freeze_budget_warning(80.0, false).has_value());
}

TEST(NormLog, RoundTripAndEpochMeans) {
  std::vector<NormEntry> e{{0, 0, 1.0}, {0, 1, 0.0}, {0, 2, 3.0}, {1, 0, 0.1 + 0.2}, {2, 0, 0.0}};
  std::stringstream s;
  write_norm_log(s, e);
  const auto r = read_norm_log(s, "mem");
  ASSERT_EQ(r.size(), e.size());
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(r[i].norm, e[i].norm);
  EXPECT_EQ(epoch_means(r), (std::vector<double>{2.0, 0.1 + 0.2}));
  std::stringstream bad("epoch,batch,norm\n0,0,abc\n");
  try {
    read_norm_log(bad, "bad.csv");
    FAIL();
  } catch (const ParseError& p) {
    EXPECT_EQ(p.line(), 2u);
  }
}

TEST(Json, HealthReport) {
  std::vector<double> base(20, 1.0), frozen(20, 0.5);
  const nlohmann::json j = to_json(freeze_health(frozen, base));
  EXPECT_EQ(j.at("verdict"), "at_risk");
  EXPECT_EQ(j.at("ratios").size(), 20u);
  EXPECT_DOUBLE_EQ(j.at("mean_ratio").get<double>(), 0.5);
}
