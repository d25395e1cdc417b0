#pragma once

// Background swap with unconstrained images and the standard geometric /
// photometric augmentations used during training.

#include "fgmae/datamodel.hpp"
#include "fgmae/rng.hpp"

namespace fgmae {

// out = mask * image + (1 - mask) * background, per pixel.
Image background_swap(const Image& image, const Image& mask, const Image& background);

// Similarity transform about the image centre in pixel coordinates:
// u' = c + scale * R(angle) * (u - c) + (tx, ty).
struct GeometricTransform {
  double angle = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;
  double scale = 1.0;
};

struct ColorJitter {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

// Resamples image and mask with bilinear interpolation (image borders are
// replicated, the mask is zero outside the frame). Keypoints are rotated
// about the camera axis and the camera is updated so that they project where
// the transformed image shows them; the cube is re-centred on `root_joint`.
ImageSample apply_transform(const ImageSample& s, const GeometricTransform& g, int root_joint = 0);

// Brightness, contrast and saturation factors, applied in that order to the
// image only, then clamped to [0,1].
Image apply_jitter(const Image& pixels, const ColorJitter& j);

GeometricTransform sample_transform(Rng& rng, const AugmentConfig& c, int height, int width);
ColorJitter sample_jitter(Rng& rng, const AugmentConfig& c);

ImageSample standard_augment(const ImageSample& s, Rng& rng, const AugmentConfig& c, int root_joint = 0);

}  // namespace fgmae
