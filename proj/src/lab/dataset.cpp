#include "freezelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "freezelab/error.hpp"

namespace fs = std::filesystem;

namespace freezelab {

double snap_coord(double v) {
  constexpr double kGrid = 16777216.0;  // 2^24
  return std::round(v * kGrid) / kGrid;
}

std::vector<Label> parse_yolo_labels(std::string_view text, const std::string& source) {
  std::vector<Label> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream tokens(line);
    std::vector<std::string> t;
    for (std::string tok; tokens >> tok;) t.push_back(tok);
    if (t.empty()) continue;
    if (t.size() != 5) {
      throw ParseError(source, lineno, "expected 5 fields (class cx cy w h), got " +
                                           std::to_string(t.size()));
    }
    double v[5];
    for (int i = 0; i < 5; ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(t[i], &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != t[i].size() || !std::isfinite(v[i])) {
        throw ParseError(source, lineno, "non-numeric token '" + t[i] + "'");
      }
    }
    if (v[0] < 0 || v[0] != std::floor(v[0])) {
      throw ParseError(source, lineno, "class id must be a non-negative integer");
    }
    static const char* names[] = {"class", "cx", "cy", "w", "h"};
    for (int i = 1; i < 5; ++i) {
      if (v[i] < 0.0 || v[i] > 1.0) {
        throw ParseError(source, lineno, std::string(names[i]) + " = " + t[i] + " outside [0, 1]");
      }
    }
    out.push_back({static_cast<int>(v[0]), snap_coord(v[1]), snap_coord(v[2]), snap_coord(v[3]),
                   snap_coord(v[4])});
  }
  return out;
}

std::vector<std::pair<int, Box>> load_yolo_labels(const std::string& path, double image_width,
                                                  double image_height) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<std::pair<int, Box>> out;
  for (const Label& l : parse_yolo_labels(buf.str(), path)) {
    out.push_back({l.class_id, Box{(l.cx - l.w / 2) * image_width, (l.cy - l.h / 2) * image_height,
                                   (l.cx + l.w / 2) * image_width,
                                   (l.cy + l.h / 2) * image_height}});
  }
  return out;
}

std::string format_yolo_labels(std::span<const Label> labels) {
  std::string out;
  char buf[160];
  for (const Label& l : labels) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g\n", l.class_id, l.cx, l.cy, l.w, l.h);
    out += buf;
  }
  return out;
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

nlohmann::json parse_json_file(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + dir);
  Dataset data;
  DatasetManifest& m = data.manifest;

  std::istringstream classes(read_text(root / "classes.txt"));
  for (std::string line; std::getline(classes, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) m.class_names.push_back(line);
  }
  if (m.class_names.empty()) throw ParseError(dir + "/classes.txt: no class names");

  std::vector<std::string> stems;
  if (!fs::is_directory(root / "images")) throw IoError(dir + ": missing images/ directory");
  for (const auto& entry : fs::directory_iterator(root / "images")) {
    if (entry.path().extension() == ".ppm") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  std::map<std::string, std::size_t> index;
  for (const std::string& stem : stems) {
    Image img = read_ppm((root / "images" / (stem + ".ppm")).string());
    const fs::path label_path = root / "labels" / (stem + ".txt");
    std::vector<Label> labels;
    if (fs::exists(label_path)) labels = parse_yolo_labels(read_text(label_path), label_path.string());
    for (const Label& l : labels) {
      if (static_cast<std::size_t>(l.class_id) >= m.class_names.size()) {
        throw ParseError(label_path.string() + ": class id " + std::to_string(l.class_id) +
                         " >= class count " + std::to_string(m.class_names.size()));
      }
    }
    index[stem] = m.images.size();
    m.images.push_back({stem, img.width, img.height});
    m.labels.push_back(std::move(labels));
    data.images.push_back(std::move(img));
  }

  if (fs::exists(root / "splits.json")) {
    const nlohmann::json j = parse_json_file(root / "splits.json");
    Splits s;
    auto read_split = [&](const char* key, std::vector<std::size_t>& out) {
      if (!j.contains(key)) return;
      for (const auto& v : j.at(key)) {
        if (!v.is_string()) throw ParseError(dir + "/splits.json: split entries must be stems");
        auto it = index.find(v.get<std::string>());
        if (it == index.end()) {
          throw ParseError(dir + "/splits.json: unknown image '" + v.get<std::string>() + "'");
        }
        out.push_back(it->second);
      }
      std::sort(out.begin(), out.end());
    };
    read_split("train", s.train);
    read_split("test", s.test);
    read_split("val", s.val);
    m.splits = std::move(s);
  }
  if (fs::exists(root / "dataset.json")) {
    const nlohmann::json j = parse_json_file(root / "dataset.json");
    if (j.contains("augmented")) m.augmented = j.at("augmented").get<bool>();
  }
  return data;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  const DatasetManifest& m = data.manifest;
  if (data.images.size() != m.images.size() || m.labels.size() != m.images.size()) {
    throw Error("save_dataset: manifest and pixel data disagree");
  }
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  std::string classes;
  for (const std::string& c : m.class_names) classes += c + "\n";
  write_text(root / "classes.txt", classes);
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    write_ppm(data.images[i], (root / "images" / (m.images[i].stem + ".ppm")).string());
    write_text(root / "labels" / (m.images[i].stem + ".txt"), format_yolo_labels(m.labels[i]));
  }
  if (m.splits) {
    auto stems = [&](const std::vector<std::size_t>& idx) {
      nlohmann::json a = nlohmann::json::array();
      for (std::size_t i : idx) a.push_back(m.images.at(i).stem);
      return a;
    };
    const nlohmann::json j = {{"train", stems(m.splits->train)},
                              {"test", stems(m.splits->test)},
                              {"val", stems(m.splits->val)}};
    write_text(root / "splits.json", j.dump(2) + "\n");
  }
  write_text(root / "dataset.json", nlohmann::json{{"augmented", m.augmented}}.dump(2) + "\n");
}

Splits split_dataset(const DatasetManifest& manifest, std::array<double, 3> ratios,
                     std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error("split_dataset: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error("split_dataset: ratios sum to " + std::to_string(sum) + ", expected 1");
  }
  const std::size_t n = manifest.images.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::set<int>> present(n);
  std::map<int, std::size_t> class_count;
  for (std::size_t i = 0; i < n; ++i) {
    for (const Label& l : manifest.labels.at(i)) present[i].insert(l.class_id);
    for (int c : present[i]) ++class_count[c];
  }
  std::array<double, 3> want_total{};
  std::map<int, std::array<double, 3>> want;
  for (std::size_t j = 0; j < 3; ++j) want_total[j] = ratios[j] * static_cast<double>(n);
  for (const auto& [c, count] : class_count) {
    for (std::size_t j = 0; j < 3; ++j) want[c][j] = ratios[j] * static_cast<double>(count);
  }

  std::vector<int> split_of(n, -1);
  auto assign = [&](std::size_t i, std::size_t j) {
    split_of[i] = static_cast<int>(j);
    want_total[j] -= 1.0;
    for (int c : present[i]) want[c][j] -= 1.0;
  };

  std::map<int, std::size_t> remaining = class_count;
  while (true) {
    int pick = -1;
    std::size_t fewest = 0;
    for (const auto& [c, r] : remaining) {
      if (r > 0 && (pick < 0 || r < fewest)) {
        pick = c;
        fewest = r;
      }
    }
    if (pick < 0) break;
    for (std::size_t i : order) {
      if (split_of[i] >= 0 || !present[i].count(pick)) continue;
      std::size_t best = 0;
      for (std::size_t j = 1; j < 3; ++j) {
        const double a = want[pick][j], b = want[pick][best];
        if (a > b || (a == b && want_total[j] > want_total[best])) best = j;
      }
      assign(i, best);
      for (int c : present[i]) --remaining[c];
    }
  }
  for (std::size_t i : order) {
    if (split_of[i] >= 0) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < 3; ++j) {
      if (want_total[j] > want_total[best]) best = j;
    }
    assign(i, best);
  }

  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    (split_of[i] == 0 ? s.train : split_of[i] == 1 ? s.test : s.val).push_back(i);
  }
  return s;
}

ClassHistogram class_histogram(const DatasetManifest& manifest) {
  std::size_t classes = manifest.class_names.size();
  for (const auto& labels : manifest.labels) {
    for (const Label& l : labels) classes = std::max(classes, static_cast<std::size_t>(l.class_id) + 1);
  }
  ClassHistogram h;
  h.images_per_class.assign(classes, 0);
  h.instances_per_class.assign(classes, 0);
  for (const auto& labels : manifest.labels) {
    std::set<int> seen;
    for (const Label& l : labels) {
      ++h.instances_per_class[static_cast<std::size_t>(l.class_id)];
      seen.insert(l.class_id);
    }
    for (int c : seen) ++h.images_per_class[static_cast<std::size_t>(c)];
  }
  return h;
}

std::vector<Sample> to_samples(const Dataset& data, std::span<const std::size_t> indices,
                               std::size_t size) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back({preprocess(data.images.at(i), size), data.manifest.labels.at(i)});
  }
  return out;
}

std::vector<Sample> to_samples(const Dataset& data, std::size_t size) {
  std::vector<std::size_t> idx(data.images.size());
  std::iota(idx.begin(), idx.end(), 0);
  return to_samples(data, idx, size);
}

}  // namespace freezelab
