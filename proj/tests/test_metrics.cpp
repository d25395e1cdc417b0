#include "fgmae/metrics.hpp"

#include <doctest.h>

#include <random>

using namespace fgmae;

namespace {

Keypoints random_pose(std::mt19937_64& rng, int k) {
  std::normal_distribution<double> g(0.0, 100.0);
  Keypoints p(k, 3);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
  return p;
}

}  // namespace

TEST_CASE("epe") {
  std::mt19937_64 rng(1);
  const Keypoints gt = random_pose(rng, 8);
  CHECK(epe(gt, gt) == 0.0);
  CHECK(epe(gt.rowwise() + Eigen::RowVector3d(3, 4, 0), gt) == 5.0);
  Keypoints pred = random_pose(rng, 8);
  Keypoints pp = pred, gp = gt;
  pp.row(0).swap(pp.row(5));
  gp.row(0).swap(gp.row(5));
  CHECK(epe(pp, gp) == doctest::Approx(epe(pred, gt)));
  CHECK_THROWS_AS(epe(gt, random_pose(rng, 7)), InvalidShape);
}

TEST_CASE("mpjpe") {
  std::mt19937_64 rng(2);
  const Keypoints gt = random_pose(rng, 4);
  CHECK(mpjpe(gt.rowwise() + Eigen::RowVector3d(10, -7, 3), gt, 0) == doctest::Approx(0.0).epsilon(1e-12));
  Keypoints pred = gt;
  pred(2, 2) += 2.0;
  CHECK(mpjpe(pred, gt, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(mpjpe(pred, gt, 4), InvalidParam);
}

TEST_CASE("procrustes recovers similarity transforms") {
  std::mt19937_64 rng(3);
  const Keypoints gt = random_pose(rng, 8);
  CHECK((procrustes_align(gt, gt) - gt).cwiseAbs().maxCoeff() < 1e-9);
  Similarity s;
  s.rotation = Eigen::AngleAxisd(1.1, Eigen::Vector3d(1, 2, -0.5).normalized()).toRotationMatrix();
  s.scale = 2.5;
  s.translation = Eigen::Vector3d(100, -50, 2000);
  const Keypoints pred = s.apply(gt);
  CHECK((procrustes_align(pred, gt) - gt).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(pa_mpjpe(pred, gt) < 1e-9);
  const Similarity r = procrustes(pred, gt);
  CHECK(r.scale == doctest::Approx(1.0 / 2.5));
  CHECK(r.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("procrustes rejects reflections") {
  std::mt19937_64 rng(4);
  const Keypoints gt = random_pose(rng, 6);
  Keypoints mirrored = gt;
  mirrored.col(0) *= -1.0;
  const Similarity r = procrustes(mirrored, gt);
  CHECK(r.rotation.determinant() == doctest::Approx(1.0));
  CHECK(pa_mpjpe(mirrored, gt) > 1.0);
}

TEST_CASE("procrustes is idempotent and bounded by mpjpe") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Keypoints a = random_pose(rng, 8), b = random_pose(rng, 8);
    const Keypoints once = procrustes_align(a, b);
    CHECK((procrustes_align(once, b) - once).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(pa_mpjpe(a, b) <= mpjpe(a, b, 0) + 1e-9);
  }
}

TEST_CASE("metrics are invariant to a common rigid motion") {
  std::mt19937_64 rng(6);
  const Keypoints a = random_pose(rng, 8), b = random_pose(rng, 8);
  Similarity m;
  m.rotation = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitY()).toRotationMatrix();
  m.translation = Eigen::Vector3d(5, 6, 7);
  CHECK(epe(m.apply(a), m.apply(b)) == doctest::Approx(epe(a, b)));
  CHECK(mpjpe(m.apply(a), m.apply(b), 0) == doctest::Approx(mpjpe(a, b, 0)));
  CHECK(pa_mpjpe(m.apply(a), m.apply(b)) == doctest::Approx(pa_mpjpe(a, b)));
}

TEST_CASE("hand-built 4-joint case against a brute-force search") {
  Keypoints gt(4, 3), pred(4, 3);
  gt << 0, 0, 0, 100, 0, 0, 0, 100, 0, 0, 0, 100;
  // gt rotated 90 degrees about z, scaled by 0.5 and shifted
  pred << 10, 10, 10, 10, 60, 10, -40, 10, 10, 10, 10, 60;
  const Eigen::RowVector3d mg = gt.colwise().mean();
  auto search = [&](const Keypoints& p) {
    const Eigen::RowVector3d m = p.colwise().mean();
    double best = 1e300;
    for (int a = 0; a < 360; ++a)
      for (int s = 0; s < 200; ++s) {
        const Eigen::Matrix3d R = Eigen::AngleAxisd(a * M_PI / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const double scale = 1.0 + s * 0.01;
        const Keypoints x = ((scale * (p.rowwise() - m) * R.transpose()).rowwise() + mg);
        best = std::min(best, (x - gt).squaredNorm());
      }
    return best;
  };
  CHECK((procrustes_align(pred, gt) - gt).squaredNorm() < 1e-9);
  CHECK(search(pred) < 1e-9);
  // nudging one joint: the z-only grid is a restricted search, so it can only do worse
  pred(3, 2) += 5.0;
  CHECK((procrustes_align(pred, gt) - gt).squaredNorm() <= search(pred) + 1e-9);
}

TEST_CASE("degenerate poses") {
  const Keypoints point = Keypoints::Zero(5, 3);
  std::mt19937_64 rng(7);
  CHECK_THROWS_AS(procrustes_align(point, random_pose(rng, 5)), DegeneratePose);
  CHECK_THROWS_AS(pa_mpjpe(random_pose(rng, 2), random_pose(rng, 2)), DegeneratePose);
}
