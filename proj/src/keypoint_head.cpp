#include "fgmae/keypoint_head.hpp"

#include "fgmae/vit.hpp"

#include <algorithm>
#include <cmath>

namespace fgmae {

namespace {
constexpr int kKernel = 4;
constexpr int kStride = 2;
constexpr int kPad = 1;
}  // namespace

template <typename T>
KeypointHead<T> KeypointHead<T>::init(const ModelConfig& c, Rng& rng) {
  validate(c);
  KeypointHead<T> h;
  h.grid = c.grid();
  h.size = c.heatmap_size();
  h.joints = c.joints;
  h.channels = c.head_channels;
  const int ch = c.head_channels;
  const int kk = kKernel * kKernel;
  h.deconv1_w = Parameter<T>("head.deconv1.w", trunc_normal<T>(c.embed_dim, kk * ch, 0.02, rng));
  h.deconv1_b = Parameter<T>("head.deconv1.b", Matrix<T>::Zero(1, ch), false);
  h.bn1_gamma = Parameter<T>("head.bn1.gamma", Matrix<T>::Ones(1, ch), false);
  h.bn1_beta = Parameter<T>("head.bn1.beta", Matrix<T>::Zero(1, ch), false);
  h.deconv2_w = Parameter<T>("head.deconv2.w", trunc_normal<T>(ch, kk * ch, 0.02, rng));
  h.deconv2_b = Parameter<T>("head.deconv2.b", Matrix<T>::Zero(1, ch), false);
  h.bn2_gamma = Parameter<T>("head.bn2.gamma", Matrix<T>::Ones(1, ch), false);
  h.bn2_beta = Parameter<T>("head.bn2.beta", Matrix<T>::Zero(1, ch), false);
  h.conv_w = Parameter<T>("head.conv.w", trunc_normal<T>(ch, Index(h.size) * h.joints, 0.02, rng));
  h.conv_b = Parameter<T>("head.conv.b", Matrix<T>::Zero(1, Index(h.size) * h.joints), false);
  h.bn1_mean = {"head.bn1.running_mean", Matrix<T>::Zero(1, ch)};
  h.bn1_var = {"head.bn1.running_var", Matrix<T>::Ones(1, ch)};
  h.bn2_mean = {"head.bn2.running_mean", Matrix<T>::Zero(1, ch)};
  h.bn2_var = {"head.bn2.running_var", Matrix<T>::Ones(1, ch)};
  return h;
}

template <typename T>
Var head_forward(Tape<T>& t, KeypointHead<T>& head, Var features, int batch, bool training) {
  const auto& f = t.value(features);
  if (f.rows() != Index(batch) * head.grid * head.grid)
    throw InvalidShape("head_forward: expected batch*N rows with N a perfect square of " +
                       std::to_string(head.grid) + "^2");
  if (f.cols() != head.deconv1_w.value.rows()) throw InvalidShape("head_forward: feature width mismatch");
  constexpr T momentum = T(0.1);
  constexpr T eps = T(1e-5);
  FeatureShape s0{batch, head.grid, head.grid};
  Var x = conv_transpose2d(t, features, t.parameter(head.deconv1_w), t.parameter(head.deconv1_b), s0, kKernel,
                           kStride, kPad);
  x = batch_norm(t, relu(t, x), t.parameter(head.bn1_gamma), t.parameter(head.bn1_beta), head.bn1_mean.value,
                 head.bn1_var.value, training, momentum, eps);
  FeatureShape s1{batch, 2 * head.grid, 2 * head.grid};
  x = conv_transpose2d(t, x, t.parameter(head.deconv2_w), t.parameter(head.deconv2_b), s1, kKernel, kStride, kPad);
  x = batch_norm(t, relu(t, x), t.parameter(head.bn2_gamma), t.parameter(head.bn2_beta), head.bn2_mean.value,
                 head.bn2_var.value, training, momentum, eps);
  return linear(t, x, t.parameter(head.conv_w), t.parameter(head.conv_b));
}

template <typename T>
Heatmap3D<T> heatmap_from_head(const Matrix<T>& output, int sample, int joints, int size, const Cube& cube,
                               double sigma) {
  const Index plane = Index(size) * size;
  if (output.cols() != Index(size) * joints || output.rows() < (sample + 1) * plane)
    throw InvalidShape("heatmap_from_head: output does not hold the requested sample");
  Heatmap3D<T> h;
  h.joints = joints;
  h.size = size;
  h.cube = cube;
  h.sigma = sigma;
  h.volume.resize(Index(joints) * size * plane);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const auto row = output.row(sample * plane + Index(y) * size + x);
      for (int k = 0; k < joints; ++k)
        for (int z = 0; z < size; ++z) h.at(k, z, y, x) = row(Index(k) * size + z);
    }
  return h;
}

template <typename T>
Matrix<T> heatmap_to_head_layout(const Heatmap3D<T>& h) {
  Matrix<T> out(Index(h.size) * h.size, Index(h.size) * h.joints);
  for (int y = 0; y < h.size; ++y)
    for (int x = 0; x < h.size; ++x)
      for (int k = 0; k < h.joints; ++k)
        for (int z = 0; z < h.size; ++z) out(Index(y) * h.size + x, Index(k) * h.size + z) = h.at(k, z, y, x);
  return out;
}

Eigen::Vector3d metric_to_voxel(const Eigen::Vector3d& p, const Cube& cube, int size) {
  return ((p - cube.center).array() + cube.side / 2.0) / cube.side * size;
}

Eigen::Vector3d voxel_to_metric(const Eigen::Vector3d& v, const Cube& cube, int size) {
  return (cube.center.array() - cube.side / 2.0 + v.array() * (cube.side / size)).matrix();
}

template <typename T>
Heatmap3D<T> keypoints_to_heatmaps(const Keypoints& joints, const Cube& cube, int size, double sigma,
                                   std::vector<bool>* clamped) {
  if (!(sigma > 0.0)) throw InvalidParam("keypoints_to_heatmaps: sigma must be positive");
  if (!(cube.side > 0.0)) throw InvalidParam("keypoints_to_heatmaps: cube side must be positive");
  const int k_count = static_cast<int>(joints.rows());
  Heatmap3D<T> h;
  h.joints = k_count;
  h.size = size;
  h.cube = cube;
  h.sigma = sigma;
  h.volume.resize(Index(k_count) * size * size * size);
  if (clamped) clamped->assign(static_cast<std::size_t>(k_count), false);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(size), gy(size), gz(size);
  for (int k = 0; k < k_count; ++k) {
    Eigen::Vector3d v = metric_to_voxel(joints.row(k).transpose(), cube, size);
    Eigen::Vector3d c = v.cwiseMax(0.0).cwiseMin(double(size - 1));
    if (clamped && c != v) (*clamped)[k] = true;
    for (int i = 0; i < size; ++i) {
      gx[i] = std::exp(-(i - c.x()) * (i - c.x()) * inv);
      gy[i] = std::exp(-(i - c.y()) * (i - c.y()) * inv);
      gz[i] = std::exp(-(i - c.z()) * (i - c.z()) * inv);
    }
    // separable: exp(-|d|^2 / 2s^2) = gx * gy * gz
    for (int z = 0; z < size; ++z)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) h.at(k, z, y, x) = static_cast<T>(gz[z] * gy[y] * gx[x]);
  }
  return h;
}

namespace {

double quadratic_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (!(denom < 0.0)) return 0.0;  // not a strict local maximum
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

template <typename T>
DecodedKeypoints heatmaps_to_keypoints(const Heatmap3D<T>& h) {
  const Index per_joint = Index(h.size) * h.size * h.size;
  if (h.joints <= 0 || h.size <= 0 || h.volume.size() != per_joint * h.joints)
    throw InvalidShape("heatmaps_to_keypoints: empty or inconsistent volume");
  DecodedKeypoints out;
  out.joints.resize(h.joints, 3);
  out.degenerate.assign(static_cast<std::size_t>(h.joints), false);
  for (int k = 0; k < h.joints; ++k) {
    auto ch = h.volume.segment(Index(k) * per_joint, per_joint);
    if (ch.maxCoeff() == ch.minCoeff()) {
      out.joints.row(k) = h.cube.center.transpose();
      out.degenerate[k] = true;
      continue;
    }
    Index best = 0;
    for (Index i = 1; i < per_joint; ++i)
      if (ch(i) > ch(best)) best = i;  // strict: first maximum wins ties
    const int x = static_cast<int>(best % h.size);
    const int y = static_cast<int>((best / h.size) % h.size);
    const int z = static_cast<int>(best / (Index(h.size) * h.size));
    auto val = [&](int zz, int yy, int xx) { return double(h.at(k, zz, yy, xx)); };
    Eigen::Vector3d v(x, y, z);
    const double c = val(z, y, x);
    if (x > 0 && x < h.size - 1) v.x() += quadratic_offset(val(z, y, x - 1), c, val(z, y, x + 1));
    if (y > 0 && y < h.size - 1) v.y() += quadratic_offset(val(z, y - 1, x), c, val(z, y + 1, x));
    if (z > 0 && z < h.size - 1) v.z() += quadratic_offset(val(z - 1, y, x), c, val(z + 1, y, x));
    out.joints.row(k) = voxel_to_metric(v, h.cube, h.size).transpose();
  }
  return out;
}

#define FGMAE_INSTANTIATE(T)                                                                                   \
  template struct KeypointHead<T>;                                                                             \
  template Var head_forward<T>(Tape<T>&, KeypointHead<T>&, Var, int, bool);                                    \
  template Heatmap3D<T> heatmap_from_head<T>(const Matrix<T>&, int, int, int, const Cube&, double);            \
  template Matrix<T> heatmap_to_head_layout<T>(const Heatmap3D<T>&);                                           \
  template Heatmap3D<T> keypoints_to_heatmaps<T>(const Keypoints&, const Cube&, int, double, std::vector<bool>*); \
  template DecodedKeypoints heatmaps_to_keypoints<T>(const Heatmap3D<T>&);

FGMAE_INSTANTIATE(float)
FGMAE_INSTANTIATE(double)

#undef FGMAE_INSTANTIATE

}  // namespace fgmae
