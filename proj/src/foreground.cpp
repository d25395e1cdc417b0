#include "fgmae/foreground.hpp"

#include <cmath>

namespace fgmae {

Eigen::VectorXd patch_foreground_ratio(const Image& mask, const PatchGridSpec& spec) {
  if (mask.cols() != 1) throw InvalidShape("foreground mask must have one channel");
  const Matrix<float> patches = patchify<float>(mask, spec);
  return patches.cast<double>().rowwise().mean();
}

PatchWeights patch_weights(const Eigen::VectorXd& ratios, double alpha) {
  if (ratios.size() == 0) throw InvalidShape("patch_weights: empty ratio vector");
  if (!std::isfinite(alpha)) throw InvalidParam("patch_weights: alpha must be finite");
  if ((ratios.array() < 0.0).any() || (ratios.array() > 1.0).any())
    throw InvalidParam("patch_weights: ratios must lie in [0,1]");
  const double n = static_cast<double>(ratios.size());
  // The common factor exp(-alpha * max) cancels in the normalisation.
  Eigen::ArrayXd z = alpha * (ratios.array() - 0.5);
  Eigen::ArrayXd w_hat = (z - z.maxCoeff()).exp();
  PatchWeights w;
  w.ratios = ratios;
  w.alpha = alpha;
  w.weights = (n * w_hat / w_hat.sum()).matrix();
  return w;
}

PatchWeights uniform_weights(const Eigen::VectorXd& ratios) {
  if (ratios.size() == 0) throw InvalidShape("uniform_weights: empty ratio vector");
  PatchWeights w;
  w.ratios = ratios;
  w.alpha = 0.0;
  w.weights = Eigen::VectorXd::Ones(ratios.size());
  return w;
}

}  // namespace fgmae
