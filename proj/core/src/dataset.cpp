#include "wmnet/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wmnet/config.hpp"
#include "wmnet/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wmnet {

DatasetSpec dataset_spec_from_file(const std::string& path) {
  DatasetSpec s;
  for (const auto& [k, v] : parse_kv_file(path)) {
    if (k == "offset_dx") s.mis.offset_dx = std::stod(v);
    else if (k == "offset_dy") s.mis.offset_dy = std::stod(v);
    else if (k == "resolution_ratio") s.mis.resolution_ratio = std::stod(v);
    else if (k == "deficiency_prob") s.mis.deficiency_prob = std::stod(v);
    else if (k == "noise_sigma") s.mis.noise_sigma = std::stod(v);
    else if (k == "illumination_gain") s.mis.illumination_gain = std::stod(v);
    else if (k == "canvas") s.canvas = std::stoi(v);
    else if (k == "train_count") s.train_count = std::stoi(v);
    else if (k == "val_count") s.val_count = std::stoi(v);
    else if (k == "seed") s.seed = std::stoull(v);
    else throw ValidationError("dataset spec: unknown key: " + k);
  }
  s.validate();
  return s;
}

std::string dataset_spec_text(const DatasetSpec& s) {
  std::ostringstream os;
  os << "offset_dx=" << s.mis.offset_dx << "\n"
     << "offset_dy=" << s.mis.offset_dy << "\n"
     << "resolution_ratio=" << s.mis.resolution_ratio << "\n"
     << "deficiency_prob=" << s.mis.deficiency_prob << "\n"
     << "noise_sigma=" << s.mis.noise_sigma << "\n"
     << "illumination_gain=" << s.mis.illumination_gain << "\n"
     << "canvas=" << s.canvas << "\n"
     << "train_count=" << s.train_count << "\n"
     << "val_count=" << s.val_count << "\n"
     << "seed=" << s.seed << "\n";
  return os.str();
}

namespace {

uint64_t image_seed(const DatasetSpec& spec, const std::string& split, int index) {
  const uint64_t base = split == "train" ? 0x100000ull : 0x900000ull;
  return spec.seed * 1000003ull + base + static_cast<uint64_t>(index);
}

std::string id_name(int id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id << ".png";
  return os.str();
}

void write_split(const DatasetSpec& spec, const std::string& split, int count,
                 const fs::path& dir) {
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "ir");
  std::ofstream ann(dir / "annotations.jsonl");
  WMNET_CHECK(ann.good(), "gen-data: cannot write annotations in " + dir.string());
  for (int i = 0; i < count; ++i) {
    PairSample p = generate_pair(image_seed(spec, split, i), spec.mis, spec.canvas, spec.canvas);
    save_image((dir / "rgb" / id_name(i)).string(), p.rgb);
    save_image((dir / "ir" / id_name(i)).string(), p.ir);
    for (const GtBox& g : p.gt) {
      json j{{"image_id", i}, {"class", g.class_id}, {"x1", g.box.x1},
             {"y1", g.box.y1}, {"x2", g.box.x2},    {"y2", g.box.y2}};
      ann << j.dump() << "\n";
    }
  }
}

}  // namespace

void generate_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  spec.validate();
  const fs::path root(out_dir);
  fs::create_directories(root);
  {
    std::ofstream f(root / "spec.txt");
    WMNET_CHECK(f.good(), "gen-data: cannot write spec in " + out_dir);
    f << dataset_spec_text(spec);
  }
  write_split(spec, "train", spec.train_count, root / "train");
  write_split(spec, "val", spec.val_count, root / "val");
}

DataSplit load_split(const std::string& dataset_dir, const std::string& split) {
  const fs::path dir = fs::path(dataset_dir) / split;
  WMNET_CHECK(fs::is_directory(dir / "ir"), "load_split: missing split " + dir.string());
  std::vector<int> ids;
  for (const auto& e : fs::directory_iterator(dir / "ir")) {
    if (e.path().extension() != ".png") continue;
    ids.push_back(std::stoi(e.path().stem().string()));
  }
  std::sort(ids.begin(), ids.end());
  WMNET_CHECK(!ids.empty(), "load_split: empty split " + dir.string());

  DataSplit out;
  out.ids = ids;
  std::map<int, GtSet> anns;
  std::ifstream f(dir / "annotations.jsonl");
  WMNET_CHECK(f.good(), "load_split: missing annotations in " + dir.string());
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    GtBox g;
    g.class_id = j.at("class").get<int>();
    g.box = Box{j.at("x1").get<double>(), j.at("y1").get<double>(),
                j.at("x2").get<double>(), j.at("y2").get<double>()};
    anns[j.at("image_id").get<int>()].push_back(g);
  }
  for (int id : ids) {
    out.rgb.push_back(load_image((dir / "rgb" / id_name(id)).string()));
    out.ir.push_back(load_image((dir / "ir" / id_name(id)).string()));
    out.gt.push_back(anns.count(id) ? anns[id] : GtSet{});
  }
  return out;
}

DataSplit synthesize_split(const DatasetSpec& spec, const std::string& split) {
  spec.validate();
  const int count = split == "train" ? spec.train_count : spec.val_count;
  DataSplit out;
  for (int i = 0; i < count; ++i) {
    PairSample p = generate_pair(image_seed(spec, split, i), spec.mis, spec.canvas, spec.canvas);
    out.rgb.push_back(std::move(p.rgb));
    out.ir.push_back(std::move(p.ir));
    out.gt.push_back(std::move(p.gt));
    out.ids.push_back(i);
  }
  return out;
}

}  // namespace wmnet
