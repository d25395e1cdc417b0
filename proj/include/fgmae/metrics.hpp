#pragma once

// Pose error metrics in millimetres.

#include "fgmae/datamodel.hpp"

namespace fgmae {

// Mean per-joint Euclidean distance, no alignment.
double epe(const Keypoints& pred, const Keypoints& gt);

// Mean per-joint distance after subtracting each pose's root joint.
double mpjpe(const Keypoints& pred, const Keypoints& gt, int root_index);

struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Keypoints apply(const Keypoints& x) const;
};

// Least-squares similarity transform taking pred onto gt (proper rotation,
// uniform scale, translation).
Similarity procrustes(const Keypoints& pred, const Keypoints& gt);
Keypoints procrustes_align(const Keypoints& pred, const Keypoints& gt);

double pa_mpjpe(const Keypoints& pred, const Keypoints& gt);

}  // namespace fgmae
