#pragma once

// 8-bit PNG I/O for (H*W) x C images in [0,1] (C = 1 grayscale or 3 RGB).

#include "fgmae/datamodel.hpp"

#include <filesystem>

namespace fgmae {

struct PngImage {
  int height = 0;
  int width = 0;
  Image pixels;
};

// Values are clamped to [0,1] and rounded to the nearest of 256 levels.
void write_png(const std::filesystem::path& path, const Image& pixels, int height, int width);

// channels: 3 converts to RGB, 1 to grayscale.
PngImage read_png(const std::filesystem::path& path, int channels);

// Rounds to the 8-bit grid used on disk, so that write/read is lossless.
Image quantize(const Image& pixels);

// Centre crop to a square, then bilinear resize to size x size.
Image crop_resize(const PngImage& img, int size);

}  // namespace fgmae
