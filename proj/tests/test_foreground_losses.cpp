#include "fgmae/foreground.hpp"
#include "fgmae/losses.hpp"

#include <doctest.h>

using namespace fgmae;

TEST_CASE("patch foreground ratio") {
  const auto spec = PatchGridSpec::make(4, 4, 2);
  CHECK(patch_foreground_ratio(Image::Ones(16, 1), spec) == Eigen::VectorXd::Ones(4));
  CHECK(patch_foreground_ratio(Image::Zero(16, 1), spec) == Eigen::VectorXd::Zero(4));
  Image m = Image::Zero(16, 1);
  m(1 * 4 + 3, 0) = 1.0f;  // pixel (1, 3) is in patch 1
  const auto r = patch_foreground_ratio(m, spec);
  CHECK(r(0) == 0.0);
  CHECK(r(1) == 0.25);
  CHECK_THROWS_AS(patch_foreground_ratio(Image::Zero(15, 1), spec), InvalidShape);
}

TEST_CASE("patch weights") {
  CHECK(patch_weights(Eigen::VectorXd::Constant(6, 0.5), 4.0).weights.isOnes(1e-12));
  CHECK(patch_weights(Eigen::VectorXd::Ones(6), 4.0).weights.isOnes(1e-12));
  Eigen::VectorXd r(4);
  r << 1, 0, 0, 0;
  const auto w = patch_weights(r, 4.0);
  CHECK(w.weights(0) == doctest::Approx(3.79166).epsilon(1e-5));
  CHECK(w.weights(1) == doctest::Approx(0.06945).epsilon(1e-4));
  CHECK(w.weights.sum() == doctest::Approx(4.0));
  CHECK(w.alpha == 4.0);

  Eigen::VectorXd s(5);
  s << 0.1, 0.9, 0.5, 0.3, 0.7;
  const auto m = patch_weights(s, 3.0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (s(i) > s(j)) CHECK(m.weights(i) > m.weights(j));
  const auto shifted = patch_weights((s.array() + 0.05).matrix(), 3.0);
  CHECK((shifted.weights - m.weights).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(uniform_weights(s).weights.isOnes());
  CHECK_THROWS_AS(patch_weights(Eigen::VectorXd(0), 4.0), InvalidShape);
}

TEST_CASE("wmae loss") {
  Matrix<double> x = Matrix<double>::Random(3, 6);
  PatchWeights w = patch_weights(Eigen::Vector3d(0.2, 0.5, 0.9), 4.0);
  CHECK(wmae_loss(x, x, w, BinaryMask{1, 1, 1}) == 0.0);

  PatchWeights hand;
  hand.ratios = Eigen::Vector2d(1, 0);
  hand.weights = Eigen::Vector2d(1.5, 0.5);
  Matrix<double> pred(2, 2), target = Matrix<double>::Zero(2, 2);
  pred << 2, 0, 9, 9;
  CHECK(wmae_loss(pred, target, hand, BinaryMask{1, 0}) == 3.0);
  pred.row(1) << -4, 100;
  CHECK(wmae_loss(pred, target, hand, BinaryMask{1, 0}) == 3.0);

  PatchWeights twice = hand;
  twice.weights *= 2.0;
  const BinaryMask both{1, 1};
  CHECK(wmae_loss(pred, target, twice, both) == doctest::Approx(2.0 * wmae_loss(pred, target, hand, both)));
  CHECK_THROWS_AS(wmae_loss<double>(pred, Matrix<double>::Zero(3, 2), hand, both), InvalidShape);
}

TEST_CASE("wmae loss batch mean") {
  Matrix<double> pred = Matrix<double>::Random(4, 3), target = Matrix<double>::Random(4, 3);
  std::vector<PatchWeights> w{patch_weights(Eigen::Vector2d(0.1, 0.7), 4.0), patch_weights(Eigen::Vector2d(1, 0), 2.0)};
  std::vector<BinaryMask> m{{1, 0}, {1, 1}};
  Tape<double> t;
  const double batched = t.scalar(wmae_loss<double>(t, t.constant(pred), target, w, m));
  const double a = wmae_loss<double>(pred.topRows(2), target.topRows(2), w[0], m[0]);
  const double b = wmae_loss<double>(pred.bottomRows(2), target.bottomRows(2), w[1], m[1]);
  CHECK(batched == doctest::Approx(0.5 * (a + b)));
}

TEST_CASE("keypoint loss") {
  Heatmap3D<double> a;
  a.joints = 1;
  a.size = 2;
  a.volume = Vector<double>::Zero(8);
  Heatmap3D<double> b = a;
  CHECK(kpt_loss(a, b) == 0.0);
  b.volume(3) = 3.0;
  CHECK(kpt_loss(a, b) == 9.0);
  b.volume(3) = 1.0;
  b.volume(5) = -2.0;
  CHECK(kpt_loss(a, b) == 5.0);
  b.cube.side = 2.0;
  CHECK_THROWS_AS(kpt_loss(a, b), InvalidCube);
}

TEST_CASE("attention loss") {
  AttentionStack<double> a{Matrix<double>::Constant(2, 3, 0.1)};
  AttentionStack<double> b = a;
  CHECK(attn_loss(a, b) == 0.0);
  b.rows(1, 2) = 0.35;
  CHECK(attn_loss(a, b) == doctest::Approx(0.25));
  CHECK(attn_loss(b, a) == doctest::Approx(0.25));
  CHECK_THROWS_AS(attn_loss<double>(a, AttentionStack<double>{Matrix<double>::Zero(3, 3)}), InvalidShape);
}

TEST_CASE("attention loss gives no gradient to the frozen side") {
  Parameter<double> p("p", Matrix<double>::Constant(1, 4, 0.2));
  const Matrix<double> frozen = Matrix<double>::Constant(1, 4, 0.1);
  Tape<double> t;
  Var l = attn_loss(t, t.parameter(p), frozen, 1);
  t.backward(l);
  CHECK(t.scalar(l) == doctest::Approx(0.4));
  CHECK(p.grad.isOnes());
}

TEST_CASE("combined objective") {
  CHECK(hpe_loss(2.0, 0.01, 100.0) == doctest::Approx(3.0));
  CHECK(hpe_loss(2.0, 0.5, 0.0) == 2.0);
  CHECK_THROWS_AS(hpe_loss(2.0, 0.5, -1.0), InvalidParam);
}
