#include "fgmae/augmentation.hpp"
#include "fgmae/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace fgmae;

namespace {

ImageSample sample(std::uint64_t seed) {
  GeneratorConfig g;
  g.seed = seed;
  return generate_split(g, DomainSpec::source(), 1, 1, "s")[0];
}

}  // namespace

TEST_CASE("background swap") {
  const Image img = Image::Random(16, 3).cwiseAbs(), bg = Image::Random(16, 3).cwiseAbs();
  CHECK(background_swap(img, Image::Ones(16, 1), bg) == img);
  CHECK(background_swap(img, Image::Zero(16, 1), bg) == bg);
  Image m(16, 1);
  for (int i = 0; i < 16; ++i) m(i, 0) = float(i % 3 == 0);
  const Image out = background_swap(img, m, bg);
  for (int i = 0; i < 16; ++i) CHECK(out.row(i) == (m(i, 0) == 1.0f ? img.row(i) : bg.row(i)));
  Image soft = Image::Constant(16, 1, 0.25f);
  CHECK(background_swap(img, soft, bg).isApprox(0.25f * img + 0.75f * bg));
  CHECK_THROWS_AS(background_swap(img, Image::Ones(15, 1), bg), InvalidShape);
}

TEST_CASE("identity augmentation") {
  const auto s = sample(1);
  Rng rng(2);
  const auto out = standard_augment(s, rng, AugmentConfig::none());
  CHECK(out.pixels.isApprox(s.pixels, 1e-6f));
  CHECK(out.mask->isApprox(*s.mask, 1e-6f));
  CHECK((*out.keypoints - *s.keypoints).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("full turn returns the original image") {
  const auto s = sample(3);
  GeometricTransform g;
  g.angle = 2.0 * M_PI;
  const auto out = apply_transform(s, g);
  CHECK((out.pixels - s.pixels).cwiseAbs().maxCoeff() < 0.02f);
  CHECK((*out.keypoints - *s.keypoints).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("augmentation is deterministic per seed") {
  const auto s = sample(4);
  Rng a(9), b(9);
  const AugmentConfig c;
  const auto x = standard_augment(s, a, c), y = standard_augment(s, b, c);
  CHECK(x.pixels == y.pixels);
  CHECK(*x.mask == *y.mask);
  CHECK(*x.keypoints == *y.keypoints);
}

TEST_CASE("invalid scale") {
  Rng rng(1);
  AugmentConfig c;
  c.scale_min = 0.0;
  c.scale_max = 0.0;
  CHECK_THROWS_AS(sample_transform(rng, c, 64, 64), InvalidParam);
}

TEST_CASE("geometry stays consistent with the keypoints") {
  const auto s = sample(5);
  GeometricTransform g;
  g.angle = 0.2;
  g.tx = 3.0;
  g.ty = -2.0;
  g.scale = 1.1;
  const auto out = apply_transform(s, g);
  const Eigen::Vector2d c(32.0, 32.0);
  const Eigen::Matrix2d R = Eigen::Rotation2Dd(g.angle).toRotationMatrix();
  for (int k = 0; k < s.keypoints->rows(); ++k) {
    const Eigen::Vector2d before = s.camera->project(s.keypoints->row(k).transpose());
    const Eigen::Vector2d expect = c + g.scale * R * (before - c) + Eigen::Vector2d(g.tx, g.ty);
    const Eigen::Vector2d after = out.camera->project(out.keypoints->row(k).transpose());
    CHECK((after - expect).norm() < 1e-6);
  }
  // bone lengths are untouched (the camera scale absorbs the zoom)
  const Keypoints& a = *s.keypoints;
  const Keypoints& b = *out.keypoints;
  CHECK(std::abs((a.row(1) - a.row(0)).norm() - (b.row(1) - b.row(0)).norm()) < 1e-9);
}

TEST_CASE("small rotations preserve the foreground area") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const auto s = sample(seed);
    GeometricTransform g;
    g.angle = 15.0 * M_PI / 180.0;
    const auto out = apply_transform(s, g);
    // only meaningful when the rotated figure stays inside the frame
    const auto& mk = *out.mask;
    bool inside = true;
    for (int y = 0; y < 64; ++y) inside = inside && mk(y * 64, 0) == 0.0f && mk(y * 64 + 63, 0) == 0.0f;
    for (int x = 0; x < 64; ++x) inside = inside && mk(x, 0) == 0.0f && mk(63 * 64 + x, 0) == 0.0f;
    if (!inside) continue;
    CHECK(std::abs(mk.sum() - s.mask->sum()) <= 0.05 * s.mask->sum());
  }
}

TEST_CASE("color jitter touches pixels only") {
  const auto s = sample(6);
  ColorJitter j{1.3, 0.8, 0.5};
  const Image out = apply_jitter(s.pixels, j);
  CHECK(out.minCoeff() >= 0.0f);
  CHECK(out.maxCoeff() <= 1.0f);
  CHECK_FALSE(out.isApprox(s.pixels));
  CHECK(apply_jitter(s.pixels, ColorJitter{}).isApprox(s.pixels, 1e-6f));
}
