#include "fgmae/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace fgmae {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image quantize(const Image& pixels) {
  return pixels.unaryExpr([](float v) { return float(to_byte(v)) / 255.0f; });
}

void write_png(const std::filesystem::path& path, const Image& pixels, int height, int width) {
  if (pixels.rows() != Index(height) * width || (pixels.cols() != 1 && pixels.cols() != 3))
    throw InvalidShape("write_png: expected (H*W) x 1 or x 3 pixels");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(pixels.size()));
  for (Index i = 0; i < pixels.size(); ++i) bytes[static_cast<std::size_t>(i)] = to_byte(pixels.data()[i]);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = pixels.cols() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + img.message);
}

PngImage read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw InvalidParam("read_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!std::filesystem::exists(path)) throw IoError("cannot read " + path.string() + ": no such file");
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw CorruptFile("cannot read " + path.string() + ": " + img.message);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw CorruptFile("cannot decode " + path.string() + ": " + img.message);
  }
  PngImage out;
  out.height = static_cast<int>(img.height);
  out.width = static_cast<int>(img.width);
  out.pixels.resize(Index(out.height) * out.width, channels);
  for (Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] = float(bytes[static_cast<std::size_t>(i)]) / 255.0f;
  return out;
}

Image crop_resize(const PngImage& img, int size) {
  const int side = std::min(img.height, img.width);
  const int oy = (img.height - side) / 2, ox = (img.width - side) / 2;
  const Index ch = img.pixels.cols();
  Image out(Index(size) * size, ch);
  const double f = double(side) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double sy = std::clamp((y + 0.5) * f - 0.5, 0.0, side - 1.0);
      const double sx = std::clamp((x + 0.5) * f - 0.5, 0.0, side - 1.0);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
      const double ay = sy - y0, ax = sx - x0;
      auto at = [&](int yy, int xx) { return img.pixels.row(Index(oy + yy) * img.width + ox + xx); };
      out.row(Index(y) * size + x) = ((1 - ay) * (1 - ax) * at(y0, x0).cast<double>() +
                                      (1 - ay) * ax * at(y0, x1).cast<double>() +
                                      ay * (1 - ax) * at(y1, x0).cast<double>() + ay * ax * at(y1, x1).cast<double>())
                                         .cast<float>();
    }
  return out;
}

}  // namespace fgmae
