#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "freezelab/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using freezelab::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("freezelab_cli_" +
                                        std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  void norm_log(const std::string& name, double value) const {
    std::ostringstream s;
    s << "epoch,batch,norm\n";
    for (int i = 0; i < 20; ++i) s << i / 5 << ',' << i % 5 << ',' << value << '\n';
    write(name, s.str());
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, freezelab::cli::kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, freezelab::cli::kExitUsage);
  EXPECT_EQ(cli({"recommend"}).code, freezelab::cli::kExitUsage);
  EXPECT_EQ(cli({"train", "c.json", "d", "--freeze", "3", "--preset", "fr1"}).code,
            freezelab::cli::kExitUsage);
  EXPECT_EQ(cli({"recommend", "--dataset", "InsPLAD-det", "--tolerance", "2"}).code,
            freezelab::cli::kExitUsage);
}

TEST_F(CliTest, DataErrors) {
  EXPECT_EQ(cli({"hist", path("missing")}).code, freezelab::cli::kExitData);
  EXPECT_EQ(cli({"recommend", "--dataset", "Nowhere"}).code, freezelab::cli::kExitData);
  write("short.csv", "epoch,batch,norm\n0,0,1\n");
  EXPECT_EQ(cli({"freeze-health", path("short.csv"), path("short.csv")}).code, freezelab::cli::kExitData);
}

TEST_F(CliTest, RecommendJson) {
  const Result r = cli({"recommend", "--dataset", "InsPLAD-det", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("chosen").at("approach"), "fr_9");
  EXPECT_EQ(j.at("chosen").at("variant"), "l");
  EXPECT_EQ(j.at("gpu_savings_pct_rounded").get<double>(), 57.0);
  EXPECT_EQ(j.at("perf_drop_pct_rounded").get<double>(), 1.2);
}

TEST_F(CliTest, FreezeHealthExitCodes) {
  norm_log("base.csv", 2.0);
  norm_log("low.csv", 1.0);
  norm_log("fine.csv", 1.8);
  const Result risk = cli({"freeze-health", path("low.csv"), path("base.csv")});
  EXPECT_EQ(risk.code, freezelab::cli::kExitAtRisk);
  EXPECT_EQ(nlohmann::json::parse(risk.out).at("verdict"), "at_risk");
  EXPECT_EQ(cli({"freeze-health", path("fine.csv"), path("base.csv")}).code, 0);
  const Result warn =
      cli({"freeze-health", path("fine.csv"), path("base.csv"), "--frozen-fraction", "66.5", "--augmented"});
  EXPECT_EQ(warn.code, 0);
  EXPECT_FALSE(nlohmann::json::parse(warn.out).at("budget_warning").is_null());
}

TEST_F(CliTest, SynthSplitTrainEvaluateGradcam) {
  write("spec.json", R"({"num_images": 10, "seed": 4})");
  ASSERT_EQ(cli({"synth", path("spec.json"), path("data")}).code, 0);
  ASSERT_EQ(cli({"split", path("data"), "--seed", "1"}).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "data" / "splits.json"));

  const Result h = cli({"hist", path("data")});
  ASSERT_EQ(h.code, 0);
  EXPECT_EQ(h.out.substr(0, h.out.find('\n')), "class_id,class_name,images,instances");

  write("cfg.json", R"({"epochs": 2, "batch_size": 4, "lr0": 0.005})");
  const Result t = cli({"train", path("cfg.json"), path("data"), "--width", "2", "--out", path("run"),
                        "--gradcam-dir", path("cams")});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"report.csv", "norms.csv", "model.ckpt", "summary.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  EXPECT_TRUE(fs::exists(dir_ / "cams" / "epoch_1.pgm"));

  const Result gs = cli({"grad-stats", path("run/norms.csv")});
  ASSERT_EQ(gs.code, 0) << gs.err;
  EXPECT_EQ(nlohmann::json::parse(gs.out).at("epochs"), 2);

  const Result e = cli({"evaluate", path("run/model.ckpt"), path("data"), "--split", "all"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ej = nlohmann::json::parse(e.out);
  EXPECT_GE(ej.at("map50").get<double>(), 0.0);
  EXPECT_LE(ej.at("map50").get<double>(), 1.0);

  const Result f = cli({"train", path("cfg.json"), path("data"), "--finetune", path("run/model.ckpt"),
                        "--preset", "fr2", "--out", path("ft")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(nlohmann::json::parse(f.out).at("frozen_blocks"), 9);

  const std::string img = (dir_ / "data" / "images").string();
  const std::string first = fs::directory_iterator(img)->path().string();
  const Result c = cli({"gradcam", path("run/model.ckpt"), first, "--out", path("cam.pgm")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_TRUE(fs::exists(dir_ / "cam.pgm"));
  EXPECT_EQ(cli({"gradcam", path("run/model.ckpt"), first, "--block", "14"}).code, freezelab::cli::kExitData);

  ASSERT_EQ(cli({"augment", path("data"), "--ops", "hflip,rotate90", "--out", path("aug")}).code, 0);
  const Result ah = cli({"hist", path("aug")});
  ASSERT_EQ(ah.code, 0);
}
