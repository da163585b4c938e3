#include "freezelab/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "freezelab/dataset.hpp"
#include "freezelab/error.hpp"
#include "freezelab/gradcam.hpp"
#include "freezelab/grad_monitor.hpp"
#include "freezelab/results.hpp"
#include "freezelab/train.hpp"

namespace freezelab::cli {

namespace fs = std::filesystem;

namespace {

// Bad flag combinations found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<NormEntry> read_norms(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_norm_log(in, path);
}

// Train/val indices: splits.json when present, otherwise a seeded 70/20/10
// stratified split.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val(const Dataset& d,
                                                                        std::uint64_t seed) {
  const Splits s = d.manifest.splits ? *d.manifest.splits
                                     : split_dataset(d.manifest, {0.7, 0.2, 0.1}, seed);
  std::vector<std::size_t> val = s.val.empty() ? s.test : s.val;
  if (s.train.empty() || val.empty()) throw Error("dataset needs non-empty train and val splits");
  return {s.train, val};
}

std::vector<std::size_t> pick_split(const Dataset& d, const std::string& name) {
  if (name == "all") {
    std::vector<std::size_t> all(d.images.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (!d.manifest.splits) throw Error("dataset has no splits.json; use --split all");
  const Splits& s = *d.manifest.splits;
  if (name == "train") return s.train;
  if (name == "test") return s.test;
  return s.val;
}

std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> r{};
  std::istringstream in(text);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(in, tok, ',')) {
    if (i == 3) throw UsageError("--ratios takes three comma-separated values");
    try {
      r[i++] = std::stod(tok);
    } catch (const std::logic_error&) {
      throw UsageError("--ratios: bad number '" + tok + "'");
    }
  }
  if (i != 3) throw UsageError("--ratios takes three comma-separated values");
  return r;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct TrainArgs {
  std::string config, data, out = "run";
  std::optional<std::size_t> freeze;
  std::string preset, finetune, gradcam_dir;
  std::size_t width = 4;
  std::size_t cam_block = kDefaultCamBlock;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.freeze && !a.preset.empty()) throw UsageError("--freeze and --preset are exclusive");
  const TrainConfig cfg = load_config(a.config);
  const Dataset data = load_dataset(a.data);
  const auto [tr, va] = train_val(data, cfg.seed);
  const std::size_t size = static_cast<std::size_t>(cfg.img_size);
  const std::vector<Sample> train_s = to_samples(data, tr, size);
  const std::vector<Sample> val_s = to_samples(data, va, size);

  const std::size_t classes = data.manifest.class_names.size();
  std::optional<Model> source;
  if (!a.finetune.empty()) source.emplace(load_checkpoint(a.finetune));
  Model model = build_model(source ? source->arch().width_base : a.width, classes, cfg.seed);
  if (source) transfer_weights(*source, model);

  std::size_t k = 0;
  if (a.freeze) k = *a.freeze;
  if (!a.preset.empty()) k = preset_blocks(parse_preset(a.preset));
  if (k > 0 && !source) {
    out << "note: freezing randomly initialized blocks (no --finetune checkpoint)\n";
  }
  const FreezePlan plan = make_freeze_plan(model, k);
  if (auto w = freeze_budget_warning(plan.frozen_fraction, data.manifest.augmented)) {
    out << "warning: " << *w << "\n";
  }

  TrainHooks hooks;
  std::optional<MilestoneRecorder> cams;
  if (!a.gradcam_dir.empty()) {
    cams.emplace(val_s.front().image, a.cam_block);
    cams->attach(hooks);
  }
  const TrainReport report = train(model, train_s, val_s, cfg, plan, hooks);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file(dir / "report.csv", csv.str());
  std::ostringstream norms;
  write_norm_log(norms, report.norm_log);
  write_file(dir / "norms.csv", norms.str());
  save_checkpoint(model, (dir / "model.ckpt").string());
  nlohmann::json summary = {{"best_epoch", report.best_epoch},
                            {"stopped_epoch", report.stopped_epoch},
                            {"frozen_blocks", k},
                            {"frozen_fraction_pct", plan.frozen_fraction},
                            {"trainable_state_bytes", report.trainable_state_bytes},
                            {"wall_time_s", report.wall_time}};
  const EpochRecord& best = report.epochs.at(report.best_epoch);
  summary["best"] = {{"val_loss", best.val_loss}, {"map50", best.map50}, {"map5095", best.map5095}};
  if (cams) summary["gradcam"] = write_milestones(cams->milestones(), a.gradcam_dir);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt, const std::string& dir, const std::string& split,
                 double conf, std::size_t size, std::ostream& out) {
  const Model model = load_checkpoint(ckpt);
  const Dataset data = load_dataset(dir);
  if (data.manifest.class_names.size() != model.num_classes()) {
    throw Error("checkpoint has " + std::to_string(model.num_classes()) +
                " classes, dataset has " + std::to_string(data.manifest.class_names.size()));
  }
  const std::vector<Sample> samples = to_samples(data, pick_split(data, split), size);
  if (samples.empty()) throw Error("split '" + split + "' is empty");
  TrainConfig cfg;
  cfg.img_size = static_cast<int>(size);
  EvalOptions opt;
  opt.conf_threshold = conf;
  const ValidationResult r = validate(model, samples, cfg, opt);
  nlohmann::json j = to_json(r.eval);
  j["val_loss"] = r.loss.total;
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_recommend(const std::string& dataset, const std::string& results, double tolerance,
                  bool json_only, std::ostream& out) {
  const std::vector<ResultRecord> records =
      results.empty() ? embedded_paper_results() : load_results_csv(results);
  const Recommendation r = recommend(records, dataset, tolerance);
  if (!json_only) {
    out << "dataset      " << dataset << "\n"
        << "best         " << r.best.label() << "  map50 " << fmt("%.3f", r.best.map50)
        << "  gpu " << fmt("%.0f", r.best.gpu_mb) << " MB\n"
        << "recommended  " << r.chosen.label() << "  map50 " << fmt("%.3f", r.chosen.map50)
        << "  map50-95 " << fmt("%.3f", r.chosen.map5095) << "  gpu "
        << fmt("%.0f", r.chosen.gpu_mb) << " MB\n"
        << "gpu savings  " << fmt("%.0f", round_half_up(r.gpu_savings_pct, 0)) << "%\n"
        << "perf drop    " << fmt("%.1f", round_half_up(r.perf_drop_pct, 1)) << "%\n";
  }
  out << to_json(r).dump(2) << "\n";
  return kExitOk;
}

int cmd_grad_stats(const std::string& log, std::ostream& out) {
  const std::vector<double> means = epoch_means(read_norms(log));
  if (means.empty()) throw Error(log + ": no positive gradient norms");
  nlohmann::json j = to_json(grad_stats(means));
  j["epochs"] = means.size();
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_freeze_health(const std::string& frozen, const std::string& baseline,
                      std::optional<double> fraction, bool augmented, std::ostream& out) {
  const FreezeHealth h = freeze_health(step_norms(read_norms(frozen)),
                                       step_norms(read_norms(baseline)));
  nlohmann::json j = to_json(h);
  if (fraction) {
    const auto w = freeze_budget_warning(*fraction, augmented);
    j["budget_warning"] = w ? nlohmann::json(*w) : nlohmann::json(nullptr);
  }
  out << j.dump(2) << "\n";
  return h.verdict == Verdict::at_risk ? kExitAtRisk : kExitOk;
}

int cmd_gradcam(const std::string& ckpt, const std::string& image, std::size_t block, int cls,
                std::size_t size, const std::string& path, std::ostream& out) {
  const Model model = load_checkpoint(ckpt);
  const Tensor input = preprocess(read_ppm(image), size);
  const CamCapture cam = capture_gradcam(model, input, block, cls);
  render_pgm(cam.map, path);
  out << nlohmann::json{{"path", path},
                        {"block", block},
                        {"height", cam.map.height},
                        {"width", cam.map.width},
                        {"cell", {cam.target.gy, cam.target.gx}},
                        {"class_id", cam.target.class_id},
                        {"score", cam.target.score}}
             .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& dir, std::ostream& out) {
  const SynthSpec spec = synth_spec_from_json(read_json(spec_path));
  const Dataset d = gen_synth_detection_set(spec);
  save_dataset(d, dir);
  out << "wrote " << d.images.size() << " images to " << dir << "\n";
  return kExitOk;
}

int cmd_split(const std::string& dir, const std::string& ratios, std::uint64_t seed,
              std::ostream& out) {
  const std::array<double, 3> r = parse_ratios(ratios);
  Dataset d = load_dataset(dir);
  d.manifest.splits = split_dataset(d.manifest, r, seed);
  save_dataset(d, dir);
  out << "train " << d.manifest.splits->train.size() << "  test "
      << d.manifest.splits->test.size() << "  val " << d.manifest.splits->val.size() << "\n";
  return kExitOk;
}

int cmd_augment(const std::string& dir, const std::vector<std::string>& op_names,
                std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  std::vector<AugmentOp> ops;
  for (const std::string& name : op_names) {
    try {
      ops.push_back(parse_augment_op(name));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  const Dataset d = load_dataset(dir);
  const Dataset a = augment_dataset(d, ops, seed);
  save_dataset(a, out_dir);
  out << "wrote " << a.images.size() << " images to " << out_dir << "\n";
  return kExitOk;
}

int cmd_hist(const std::string& dir, std::ostream& out) {
  const Dataset d = load_dataset(dir);
  const ClassHistogram h = class_histogram(d.manifest);
  out << "class_id,class_name,images,instances\n";
  for (std::size_t c = 0; c < d.manifest.class_names.size(); ++c) {
    out << c << ',' << d.manifest.class_names[c] << ',' << h.images_per_class.at(c) << ','
        << h.instances_per_class.at(c) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"freezelab: layer-freezing experiments on a small detector"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train from scratch, fine-tune or freeze");
  train_cmd->add_option("config", ta.config, "TrainConfig JSON")->required();
  train_cmd->add_option("data", ta.data, "Dataset directory")->required();
  auto* freeze_opt = train_cmd->add_option("--freeze", ta.freeze, "Freeze the first K blocks");
  train_cmd->add_option("--preset", ta.preset, "fr1, fr2 or fr3")
      ->check(CLI::IsMember({"fr1", "fr2", "fr3"}))
      ->excludes(freeze_opt);
  train_cmd->add_option("--finetune", ta.finetune, "Start from this checkpoint");
  train_cmd->add_option("--width", ta.width, "Base channel width of a new model")
      ->check(CLI::Range(2, 256));
  train_cmd->add_option("--out", ta.out, "Output directory");
  train_cmd->add_option("--gradcam-dir", ta.gradcam_dir, "Write milestone heatmaps here");
  train_cmd->add_option("--gradcam-block", ta.cam_block, "Target block for milestone heatmaps");

  std::string ckpt, data_dir, split = "val", image, path = "cam.pgm", results, dataset;
  std::string frozen_log, baseline_log, ratios = "0.7,0.2,0.1", out_dir, spec;
  double conf = 0.5, tolerance = kDefaultTolerance;
  std::size_t size = 64, block = kDefaultCamBlock;
  int cls = -1;
  std::uint64_t seed = 0;
  bool json_only = false, augmented = false;
  std::optional<double> fraction;
  std::vector<std::string> ops;

  auto* eval_cmd = app.add_subcommand("evaluate", "mAP of a checkpoint on a dataset split");
  eval_cmd->add_option("checkpoint", ckpt)->required();
  eval_cmd->add_option("data", data_dir)->required();
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "test", "val", "all"}));
  eval_cmd->add_option("--conf", conf, "Confidence threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--size", size, "Input size")->check(CLI::PositiveNumber);

  auto* rec_cmd = app.add_subcommand("recommend", "Cheapest configuration within tolerance");
  rec_cmd->add_option("--dataset", dataset)->required();
  rec_cmd->add_option("--results", results, "Results CSV (default: embedded tables)");
  rec_cmd->add_option("--tolerance", tolerance)->check(CLI::Range(0.0, 0.999999));
  rec_cmd->add_flag("--json", json_only, "Print only the JSON");

  std::string norm_log;
  auto* gs_cmd = app.add_subcommand("grad-stats", "Mean, std and CV of epoch gradient norms");
  gs_cmd->add_option("log", norm_log, "Norm log CSV")->required();

  auto* fh_cmd = app.add_subcommand("freeze-health", "Frozen-vs-baseline gradient ratio check");
  fh_cmd->add_option("frozen", frozen_log)->required();
  fh_cmd->add_option("baseline", baseline_log)->required();
  fh_cmd->add_option("--frozen-fraction", fraction, "Percent of frozen parameters");
  fh_cmd->add_flag("--augmented", augmented, "Dataset is augmented");

  auto* cam_cmd = app.add_subcommand("gradcam", "Heatmap of one image as a PGM");
  cam_cmd->add_option("checkpoint", ckpt)->required();
  cam_cmd->add_option("image", image, "PPM image")->required();
  cam_cmd->add_option("--block", block);
  cam_cmd->add_option("--class", cls, "Class to explain (default: best scoring)");
  cam_cmd->add_option("--size", size)->check(CLI::PositiveNumber);
  cam_cmd->add_option("--out", path);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("spec", spec, "SynthSpec JSON")->required();
  synth_cmd->add_option("out", out_dir)->required();

  auto* split_cmd = app.add_subcommand("split", "Write a stratified splits.json");
  split_cmd->add_option("data", data_dir)->required();
  split_cmd->add_option("--ratios", ratios, "train,test,val");
  split_cmd->add_option("--seed", seed);

  auto* aug_cmd = app.add_subcommand("augment", "Append augmented copies of every image");
  aug_cmd->add_option("data", data_dir)->required();
  aug_cmd->add_option("--ops", ops, "hflip vflip rotate90 random_crop gaussian_blur gaussian_noise")
      ->required()
      ->delimiter(',');
  aug_cmd->add_option("--seed", seed);
  aug_cmd->add_option("--out", out_dir)->required();

  auto* hist_cmd = app.add_subcommand("hist", "Images and instances per class");
  hist_cmd->add_option("data", data_dir)->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*eval_cmd) return cmd_evaluate(ckpt, data_dir, split, conf, size, out);
    if (*rec_cmd) return cmd_recommend(dataset, results, tolerance, json_only, out);
    if (*gs_cmd) return cmd_grad_stats(norm_log, out);
    if (*fh_cmd) return cmd_freeze_health(frozen_log, baseline_log, fraction, augmented, out);
    if (*cam_cmd) return cmd_gradcam(ckpt, image, block, cls, size, path, out);
    if (*synth_cmd) return cmd_synth(spec, out_dir, out);
    if (*split_cmd) return cmd_split(data_dir, ratios, seed, out);
    if (*aug_cmd) return cmd_augment(data_dir, ops, seed, out_dir, out);
    if (*hist_cmd) return cmd_hist(data_dir, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace freezelab::cli
