#pragma once

// Foreground-centric patch weights for the reconstruction loss.

#include "fgmae/datamodel.hpp"
#include "fgmae/patching.hpp"

namespace fgmae {

// Mean mask value inside each P x P patch (average pooling, kernel = stride = P),
// in patchify order.
Eigen::VectorXd patch_foreground_ratio(const Image& mask, const PatchGridSpec& spec);

// w_hat_i = exp(alpha * (w*_i - 0.5)),  w_i = N * w_hat_i / sum_k w_hat_k
PatchWeights patch_weights(const Eigen::VectorXd& ratios, double alpha);

// All-ones weights: the reconstruction loss without foreground emphasis.
PatchWeights uniform_weights(const Eigen::VectorXd& ratios);

}  // namespace fgmae
