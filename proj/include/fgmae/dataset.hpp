#pragma once

// On-disk dataset layout:
//   <root>/<split>/<domain>/images/<sample_id>.png   RGB, 8 bit
//   <root>/<split>/<domain>/masks/<sample_id>.png    grayscale, 8 bit (optional)
//   <root>/<split>/<domain>/annotations.jsonl        one record per sample

#include "fgmae/datamodel.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fgmae {

std::filesystem::path split_dir(const std::filesystem::path& root, const std::string& split, Domain d);

nlohmann::json annotation_to_json(const ImageSample& s);
// Fills keypoints / cube / camera / ids of `s` from a record.
void annotation_from_json(const nlohmann::json& j, ImageSample& s);

void write_split(const std::filesystem::path& root, const std::string& split, Domain d,
                 const std::vector<ImageSample>& samples);

// Masks are loaded when masks/<id>.png exists. Throws IoError when the
// split directory or an image is missing.
std::vector<ImageSample> read_split(const std::filesystem::path& root, const std::string& split, Domain d);

// Writes masks/<id>.png for every sample (used for predicted target masks).
void write_masks(const std::filesystem::path& dir, const std::vector<ImageSample>& samples,
                 const std::vector<Image>& masks);

}  // namespace fgmae
