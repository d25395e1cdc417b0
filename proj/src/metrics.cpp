#include "fgmae/metrics.hpp"

#include <Eigen/SVD>

namespace fgmae {

namespace {

void check_pair(const Keypoints& pred, const Keypoints& gt) {
  if (pred.rows() != gt.rows() || pred.rows() == 0) throw InvalidShape("pose metrics need equal, non-zero joint counts");
}

double mean_distance(const Keypoints& a, const Keypoints& b) { return (a - b).rowwise().norm().mean(); }

}  // namespace

double epe(const Keypoints& pred, const Keypoints& gt) {
  check_pair(pred, gt);
  return mean_distance(pred, gt);
}

double mpjpe(const Keypoints& pred, const Keypoints& gt, int root_index) {
  check_pair(pred, gt);
  if (root_index < 0 || root_index >= pred.rows()) throw InvalidParam("mpjpe: root index out of range");
  const Keypoints p = pred.rowwise() - pred.row(root_index);
  const Keypoints g = gt.rowwise() - gt.row(root_index);
  return mean_distance(p, g);
}

Keypoints Similarity::apply(const Keypoints& x) const {
  Keypoints out = (scale * (x * rotation.transpose())).rowwise() + translation.transpose();
  return out;
}

Similarity procrustes(const Keypoints& pred, const Keypoints& gt) {
  check_pair(pred, gt);
  if (pred.rows() < 3) throw DegeneratePose("procrustes needs at least 3 joints");
  const Eigen::RowVector3d mp = pred.colwise().mean(), mg = gt.colwise().mean();
  const Eigen::MatrixX3d p = pred.rowwise() - mp, g = gt.rowwise() - mg;
  const double var_p = p.squaredNorm();
  if (!(var_p > 1e-18)) throw DegeneratePose("predicted joints are coincident");
  // maximise tr(R * p^T g): R = V diag(1,1,det) U^T for p^T g = U S V^T
  const Eigen::Matrix3d cov = p.transpose() * g;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d(1.0, 1.0, 1.0);
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2) = -1.0;
  Similarity s;
  s.rotation = svd.matrixV() * d.asDiagonal() * svd.matrixU().transpose();
  s.scale = svd.singularValues().dot(d) / var_p;
  s.translation = mg.transpose() - s.scale * s.rotation * mp.transpose();
  return s;
}

Keypoints procrustes_align(const Keypoints& pred, const Keypoints& gt) { return procrustes(pred, gt).apply(pred); }

double pa_mpjpe(const Keypoints& pred, const Keypoints& gt) { return mean_distance(procrustes_align(pred, gt), gt); }

}  // namespace fgmae
