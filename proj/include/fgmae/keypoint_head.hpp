#pragma once

// Volumetric keypoint head plus the Gaussian target encoder and the
// argmax decoder that maps voxels back to millimetres.
//
// Voxel coordinates: axis x follows image columns, y image rows and z depth.
// A joint at metric position p lands on continuous voxel coordinate
//   v = (p - cube.center + side/2) / side * S,
// so voxel i is centred at metric coordinate center - side/2 + i * side/S.

#include "fgmae/autograd.hpp"
#include "fgmae/datamodel.hpp"
#include "fgmae/rng.hpp"

#include <vector>

namespace fgmae {

template <typename T>
struct KeypointHead {
  int grid = 0;      // sqrt(N)
  int size = 0;      // output cube side S = 4 * grid
  int joints = 0;
  int channels = 0;
  Parameter<T> deconv1_w, deconv1_b, bn1_gamma, bn1_beta;
  Parameter<T> deconv2_w, deconv2_b, bn2_gamma, bn2_beta;
  Parameter<T> conv_w, conv_b;  // 1x1 convolution to S*K channels
  Buffer<T> bn1_mean, bn1_var, bn2_mean, bn2_var;

  static KeypointHead init(const ModelConfig& c, Rng& rng);

  template <typename F>
  void for_each_parameter(F&& f) {
    for (Parameter<T>* p : {&deconv1_w, &deconv1_b, &bn1_gamma, &bn1_beta, &deconv2_w, &deconv2_b, &bn2_gamma,
                            &bn2_beta, &conv_w, &conv_b})
      f(*p);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    for (Buffer<T>* b : {&bn1_mean, &bn1_var, &bn2_mean, &bn2_var}) f(*b);
  }
};

// features: (batch*N) x d patch tokens (class token removed), read as a
// sqrt(N) x sqrt(N) x d map per sample. Output: (batch*S*S) x (S*K) where
// row (b, y, x) and column k*S + z hold voxel (k, z, y, x) of sample b.
// Deconv -> ReLU -> BatchNorm twice, then the 1x1 convolution.
template <typename T>
Var head_forward(Tape<T>& t, KeypointHead<T>& head, Var features, int batch, bool training);

template <typename T>
Heatmap3D<T> heatmap_from_head(const Matrix<T>& output, int sample, int joints, int size, const Cube& cube,
                               double sigma);

template <typename T>
Matrix<T> heatmap_to_head_layout(const Heatmap3D<T>& h);

Eigen::Vector3d metric_to_voxel(const Eigen::Vector3d& p, const Cube& cube, int size);
Eigen::Vector3d voxel_to_metric(const Eigen::Vector3d& v, const Cube& cube, int size);

// Gaussian blob per joint. Joints outside the cube are clamped to its
// boundary; clamped[k] reports which ones were.
template <typename T>
Heatmap3D<T> keypoints_to_heatmaps(const Keypoints& joints, const Cube& cube, int size, double sigma,
                                   std::vector<bool>* clamped = nullptr);

struct DecodedKeypoints {
  Keypoints joints;
  std::vector<bool> degenerate;  // channel was constant; joint set to the cube centre
};

// Argmax voxel (ties -> smallest linear index) with a 1D quadratic
// refinement along each axis, mapped back to millimetres.
template <typename T>
DecodedKeypoints heatmaps_to_keypoints(const Heatmap3D<T>& h);

}  // namespace fgmae
