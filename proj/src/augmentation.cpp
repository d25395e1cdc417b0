#include "fgmae/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fgmae {

Image background_swap(const Image& image, const Image& mask, const Image& background) {
  if (image.rows() != background.rows() || image.cols() != background.cols())
    throw InvalidShape("background_swap: background does not match the image");
  if (mask.rows() != image.rows() || mask.cols() != 1) throw InvalidShape("background_swap: mask does not match the image");
  Image out(image.rows(), image.cols());
  for (Index i = 0; i < image.rows(); ++i) {
    const float m = mask(i, 0);
    if (m == 1.0f) {
      out.row(i) = image.row(i);
    } else if (m == 0.0f) {
      out.row(i) = background.row(i);
    } else {
      out.row(i) = m * image.row(i) + (1.0f - m) * background.row(i);
    }
  }
  return out;
}

namespace {

// Bilinear lookup at continuous pixel coordinates (x, y) with pixel centres
// at integer + 0.5.
void sample_bilinear(const Image& src, int h, int w, double x, double y, bool clamp, float* out) {
  const Index ch = src.cols();
  const double fx = x - 0.5, fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  for (Index c = 0; c < ch; ++c) out[c] = 0.0f;
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      int xi = x0 + dx, yi = y0 + dy;
      const double wgt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      if (wgt == 0.0) continue;
      if (clamp) {
        xi = std::clamp(xi, 0, w - 1);
        yi = std::clamp(yi, 0, h - 1);
      } else if (xi < 0 || yi < 0 || xi >= w || yi >= h) {
        continue;
      }
      const Index row = Index(yi) * w + xi;
      for (Index c = 0; c < ch; ++c) out[c] += static_cast<float>(wgt * src(row, c));
    }
}

Image warp(const Image& src, int h, int w, const GeometricTransform& g, bool clamp) {
  Image out(src.rows(), src.cols());
  const double cx = w / 2.0, cy = h / 2.0;
  const double ca = std::cos(g.angle), sa = std::sin(g.angle);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse map: u = c + R^T (u' - c - t) / s
      const double px = x + 0.5 - cx - g.tx, py = y + 0.5 - cy - g.ty;
      const double qx = cx + (ca * px + sa * py) / g.scale;
      const double qy = cy + (-sa * px + ca * py) / g.scale;
      sample_bilinear(src, h, w, qx, qy, clamp, out.row(Index(y) * w + x).data());
    }
  return out;
}

}  // namespace

ImageSample apply_transform(const ImageSample& s, const GeometricTransform& g, int root_joint) {
  if (!(g.scale > 0.0)) throw InvalidParam("augmentation scale must be positive");
  ImageSample out = s;
  out.pixels = warp(s.pixels, s.height, s.width, g, true);
  if (s.mask) out.mask = warp(*s.mask, s.height, s.width, g, false);
  if (s.keypoints && s.camera) {
    const double ca = std::cos(g.angle), sa = std::sin(g.angle);
    Keypoints k = *s.keypoints;
    for (Index j = 0; j < k.rows(); ++j) {
      const double x = k(j, 0), y = k(j, 1);
      k(j, 0) = ca * x - sa * y;
      k(j, 1) = sa * x + ca * y;
    }
    const double cx = s.width / 2.0, cy = s.height / 2.0;
    const double du = s.camera->u0 - cx, dv = s.camera->v0 - cy;
    Camera cam;
    cam.scale = s.camera->scale * g.scale;
    cam.u0 = cx + g.scale * (ca * du - sa * dv) + g.tx;
    cam.v0 = cy + g.scale * (sa * du + ca * dv) + g.ty;
    out.keypoints = k;
    out.camera = cam;
    if (s.cube) {
      if (root_joint < 0 || root_joint >= k.rows()) throw InvalidParam("apply_transform: root joint out of range");
      out.cube->center = k.row(root_joint).transpose();
    }
  }
  return out;
}

Image apply_jitter(const Image& pixels, const ColorJitter& j) {
  Image out = pixels * static_cast<float>(j.brightness);
  const Eigen::Vector3f luma(0.299f, 0.587f, 0.114f);
  if (j.contrast != 1.0) {
    const float mean = (out * luma).mean();
    out = ((out.array() - mean) * static_cast<float>(j.contrast) + mean).matrix();
  }
  if (j.saturation != 1.0) {
    const Eigen::VectorXf gray = out * luma;
    const float f = static_cast<float>(j.saturation);
    for (Index c = 0; c < out.cols(); ++c) out.col(c) = gray + f * (out.col(c) - gray);
  }
  return out.cwiseMax(0.0f).cwiseMin(1.0f);
}

GeometricTransform sample_transform(Rng& rng, const AugmentConfig& c, int height, int width) {
  if (!(c.scale_min > 0.0) || c.scale_max < c.scale_min) throw InvalidParam("augmentation scale range must be positive");
  GeometricTransform g;
  const double rot = c.rotation_deg * std::numbers::pi / 180.0;
  g.angle = rot > 0.0 ? uniform(rng, -rot, rot) : 0.0;
  g.tx = c.translate_frac > 0.0 ? uniform(rng, -c.translate_frac, c.translate_frac) * width : 0.0;
  g.ty = c.translate_frac > 0.0 ? uniform(rng, -c.translate_frac, c.translate_frac) * height : 0.0;
  g.scale = c.scale_max > c.scale_min ? uniform(rng, c.scale_min, c.scale_max) : c.scale_min;
  return g;
}

ColorJitter sample_jitter(Rng& rng, const AugmentConfig& c) {
  auto factor = [&rng](double s) { return s > 0.0 ? uniform(rng, std::max(0.0, 1.0 - s), 1.0 + s) : 1.0; };
  ColorJitter j;
  j.brightness = factor(c.brightness);
  j.contrast = factor(c.contrast);
  j.saturation = factor(c.saturation);
  return j;
}

ImageSample standard_augment(const ImageSample& s, Rng& rng, const AugmentConfig& c, int root_joint) {
  const GeometricTransform g = sample_transform(rng, c, s.height, s.width);
  const ColorJitter j = sample_jitter(rng, c);
  const bool identity = g.angle == 0.0 && g.tx == 0.0 && g.ty == 0.0 && g.scale == 1.0;
  ImageSample out = identity ? s : apply_transform(s, g, root_joint);
  if (j.brightness != 1.0 || j.contrast != 1.0 || j.saturation != 1.0) out.pixels = apply_jitter(out.pixels, j);
  return out;
}

}  // namespace fgmae
