#include "fgmae/dataset.hpp"

#include "fgmae/image_io.hpp"

#include <fstream>

namespace fgmae {

namespace fs = std::filesystem;

fs::path split_dir(const fs::path& root, const std::string& split, Domain d) { return root / split / to_string(d); }

nlohmann::json annotation_to_json(const ImageSample& s) {
  nlohmann::json j;
  j["sample_id"] = s.sample_id;
  if (s.keypoints) {
    auto rows = nlohmann::json::array();
    for (Index k = 0; k < s.keypoints->rows(); ++k)
      rows.push_back({(*s.keypoints)(k, 0), (*s.keypoints)(k, 1), (*s.keypoints)(k, 2)});
    j["keypoints"] = rows;
  }
  if (s.cube) j["cube"] = {{"center", {s.cube->center.x(), s.cube->center.y(), s.cube->center.z()}}, {"side", s.cube->side}};
  if (s.camera) j["camera"] = {{"scale", s.camera->scale}, {"u0", s.camera->u0}, {"v0", s.camera->v0}};
  if (s.camera && s.keypoints) {
    // pixel coordinates, pixel (x, y) spans [x, x+1) x [y, y+1)
    auto uv = nlohmann::json::array();
    for (Index k = 0; k < s.keypoints->rows(); ++k) {
      const Eigen::Vector2d p = s.camera->project(s.keypoints->row(k).transpose());
      uv.push_back({p.x(), p.y()});
    }
    j["keypoints_2d"] = uv;
  }
  j["rng_seed"] = s.rng_seed;
  return j;
}

void annotation_from_json(const nlohmann::json& j, ImageSample& s) {
  try {
    s.sample_id = j.at("sample_id").get<std::string>();
    s.rng_seed = j.value("rng_seed", std::uint64_t{0});
    if (j.contains("keypoints")) {
      const auto& rows = j.at("keypoints");
      Keypoints k(static_cast<Index>(rows.size()), 3);
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < 3; ++c) k(Index(r), c) = rows.at(r).at(c).get<double>();
      s.keypoints = k;
    }
    if (j.contains("cube")) {
      const auto& c = j.at("cube");
      Cube cube;
      for (int i = 0; i < 3; ++i) cube.center(i) = c.at("center").at(i).get<double>();
      cube.side = c.at("side").get<double>();
      s.cube = cube;
    }
    if (j.contains("camera")) {
      const auto& c = j.at("camera");
      s.camera = Camera{c.at("scale").get<double>(), c.at("u0").get<double>(), c.at("v0").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("bad annotation record: ") + e.what());
  }
}

void write_split(const fs::path& root, const std::string& split, Domain d, const std::vector<ImageSample>& samples) {
  const fs::path dir = split_dir(root, split, d);
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  bool any_mask = false;
  for (const auto& s : samples) any_mask = any_mask || s.mask.has_value();
  if (any_mask) fs::create_directories(dir / "masks");
  std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
  if (!ann) throw IoError("cannot write " + (dir / "annotations.jsonl").string());
  for (const auto& s : samples) {
    write_png(dir / "images" / (s.sample_id + ".png"), s.pixels, s.height, s.width);
    if (s.mask) write_png(dir / "masks" / (s.sample_id + ".png"), *s.mask, s.height, s.width);
    ann << annotation_to_json(s).dump() << '\n';
  }
  if (!ann) throw IoError("write failed: " + (dir / "annotations.jsonl").string());
}

std::vector<ImageSample> read_split(const fs::path& root, const std::string& split, Domain d) {
  const fs::path dir = split_dir(root, split, d);
  std::ifstream ann(dir / "annotations.jsonl");
  if (!ann) throw IoError("missing " + (dir / "annotations.jsonl").string());
  std::vector<ImageSample> out;
  std::string line;
  while (std::getline(ann, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFile((dir / "annotations.jsonl").string() + ": " + e.what());
    }
    ImageSample s;
    s.domain = d;
    annotation_from_json(j, s);
    PngImage img = read_png(dir / "images" / (s.sample_id + ".png"), 3);
    s.height = img.height;
    s.width = img.width;
    s.pixels = std::move(img.pixels);
    const fs::path mask_path = dir / "masks" / (s.sample_id + ".png");
    if (fs::exists(mask_path)) {
      PngImage m = read_png(mask_path, 1);
      if (m.height != s.height || m.width != s.width) throw InvalidShape("mask size differs from image: " + mask_path.string());
      s.mask = std::move(m.pixels);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_masks(const fs::path& dir, const std::vector<ImageSample>& samples, const std::vector<Image>& masks) {
  if (samples.size() != masks.size()) throw InvalidShape("write_masks: one mask per sample required");
  fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < samples.size(); ++i)
    write_png(dir / "masks" / (samples[i].sample_id + ".png"), masks[i], samples[i].height, samples[i].width);
}

}  // namespace fgmae
