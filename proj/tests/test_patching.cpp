#include "fgmae/patching.hpp"

#include <doctest.h>

using namespace fgmae;

TEST_CASE("patchify shapes") {
  const auto spec = PatchGridSpec::make(256, 256, 16);
  CHECK(spec.count() == 256);
  CHECK(patchify<float>(Matrix<float>::Zero(256 * 256, 3), spec).rows() == 256);
  CHECK(patchify<float>(Matrix<float>::Zero(256 * 256, 3), spec).cols() == 768);
  CHECK_THROWS_AS(PatchGridSpec::make(30, 32, 8), InvalidShape);
  CHECK_THROWS_AS(patchify<float>(Matrix<float>::Zero(10, 3), spec), InvalidShape);
}

TEST_CASE("patchify of a constant image") {
  const auto spec = PatchGridSpec::make(8, 8, 4);
  const auto p = patchify<float>(Matrix<float>::Constant(64, 3, 0.25f), spec);
  CHECK((p.array() == 0.25f).all());
}

TEST_CASE("patchify on a 4x4 index image") {
  // pixel (y, x) has value y*4 + x in every channel
  Matrix<double> img(16, 3);
  for (int i = 0; i < 16; ++i) img.row(i).setConstant(i);
  const auto p = patchify<double>(img, PatchGridSpec::make(4, 4, 2));
  const int expected[4][4] = {{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
  for (int patch = 0; patch < 4; ++patch)
    for (int px = 0; px < 4; ++px)
      for (int c = 0; c < 3; ++c) CHECK(p(patch, px * 3 + c) == expected[patch][px]);
}

TEST_CASE("unpatchify inverts patchify") {
  const auto spec = PatchGridSpec::make(64, 64, 8);
  const Matrix<float> img = Matrix<float>::Random(64 * 64, 3);
  CHECK(unpatchify(patchify(img, spec), spec) == img);
  CHECK(unpatchify<float>(Matrix<float>::Zero(64, 192), spec).isZero());
}

TEST_CASE("a single nonzero patch lands in its rectangle") {
  const auto spec = PatchGridSpec::make(16, 24, 4);  // 4 x 6 grid
  const int j = 9;                                    // row 1, col 3
  Matrix<float> p = Matrix<float>::Zero(spec.count(), 48);
  p.row(j).setOnes();
  const auto img = unpatchify(p, spec);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x) {
      const bool inside = y / 4 == j / 6 && x / 4 == j % 6;
      CHECK((img.row(y * 24 + x).array() == (inside ? 1.0f : 0.0f)).all());
    }
}

TEST_CASE("mask generation") {
  Rng rng(5);
  auto count = [](const BinaryMask& m) {
    int n = 0;
    for (auto v : m) n += v;
    return n;
  };
  CHECK(count(generate_mask(256, 0.75, rng)) == 192);
  CHECK(count(generate_mask(64, 0.75, rng)) == 48);
  CHECK(count(generate_mask(10, 0.0, rng)) == 0);
  CHECK(masked_count(10, 0.25) == 3);  // 2.5 rounds away from zero
  CHECK_THROWS_AS(generate_mask(10, 1.0, rng), InvalidParam);
  CHECK_THROWS_AS(generate_mask(10, -0.1, rng), InvalidParam);

  std::vector<int> hits(16, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto m = generate_mask(16, 0.5, rng);
    for (int k = 0; k < 16; ++k) hits[k] += m[k];
  }
  for (int k = 0; k < 16; ++k) CHECK(std::abs(hits[k] / double(draws) - 0.5) <= 0.02);

  Rng a(9), b(9);
  CHECK(generate_mask(100, 0.6, a) == generate_mask(100, 0.6, b));
}

TEST_CASE("apply_mask and restore_order") {
  Matrix<double> tokens(4, 2);
  tokens << 0, 0, 1, 1, 2, 2, 3, 3;
  const BinaryMask mask{1, 0, 1, 0};
  const auto kept = apply_mask(tokens, mask);
  REQUIRE(kept.tokens.rows() == 2);
  CHECK(kept.tokens.row(0) == tokens.row(1));
  CHECK(kept.tokens.row(1) == tokens.row(3));
  CHECK(kept.index_map == std::vector<Index>{1, 3});

  RowVector<double> m(2);
  m << -7, -7;
  const auto back = restore_order(kept, m, mask);
  CHECK(back.row(0) == m);
  CHECK(back.row(1) == tokens.row(1));
  CHECK(back.row(2) == m);
  CHECK(back.row(3) == tokens.row(3));

  const auto all = apply_mask(tokens, BinaryMask(4, 0));
  CHECK(all.tokens == tokens);
  CHECK(restore_order(all, m, BinaryMask(4, 0)) == tokens);

  CHECK_THROWS_AS(apply_mask(tokens, BinaryMask{1, 0}), InvalidShape);
  CHECK_THROWS_AS(restore_order(kept, m, BinaryMask{1, 0, 0, 0}), InvalidShape);
}

TEST_CASE("full-scale masking shapes") {
  Rng rng(6);
  const auto mask = generate_mask(256, 0.75, rng);
  const auto kept = apply_mask<float>(Matrix<float>::Zero(256, 768), mask);
  CHECK(kept.tokens.rows() == 64);
  const auto back = restore_order<float>(kept, RowVector<float>::Zero(768), mask);
  CHECK(back.rows() == 256);
}
