#pragma once

// U-shaped foreground segmenter: encoder levels of two 3x3 convolutions
// separated by 2x2 max pooling, a mirrored decoder with nearest upsampling and
// skip concatenation, and a 1x1 convolution with sigmoid output.

#include "fgmae/autograd.hpp"
#include "fgmae/datamodel.hpp"
#include "fgmae/rng.hpp"

#include <functional>
#include <vector>

namespace fgmae {

template <typename T>
struct ConvParams {
  Parameter<T> w, b;
  int kernel = 3;
};

template <typename T>
struct Segmenter {
  int levels = 3;
  int channels = 16;
  std::vector<ConvParams<T>> down;  // 2 per level, levels + 1 levels (last is the bottleneck)
  std::vector<ConvParams<T>> up;    // 2 per decoder level
  ConvParams<T> out;                // 1x1 -> 1 logit
  Parameter<T> bn_gamma, bn_beta;   // after the first convolution
  Buffer<T> bn_mean, bn_var;

  static Segmenter init(const SegmenterConfig& c, Rng& rng);

  template <typename F>
  void for_each_parameter(F&& f) {
    for (auto& c : down) { f(c.w); f(c.b); }
    for (auto& c : up) { f(c.w); f(c.b); }
    f(out.w);
    f(out.b);
    f(bn_gamma);
    f(bn_beta);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    f(bn_mean);
    f(bn_var);
  }
};

// Logits, (batch*H*W) x 1.
template <typename T>
Var segment_logits(Tape<T>& t, Segmenter<T>& seg, const Matrix<T>& images, FeatureShape shape, bool training);

// Evaluation-mode soft mask in (0,1), (H*W) x 1.
Image segment(Segmenter<float>& seg, const ImageSample& sample);

// >= threshold -> 1, else 0.
Image binarize(const Image& soft, float threshold = 0.5f);

double iou(const Image& a, const Image& b, float threshold = 0.5f);

// Mean pixelwise binary cross-entropy of probabilities p against targets y.
double binary_cross_entropy(const Image& p, const Image& y);

struct SegmenterTrainLog {
  std::vector<double> train_loss;  // per step
  std::vector<std::pair<int, double>> val_loss;  // (step, loss)
  int best_step = -1;
};

// Minimises pixelwise BCE on source images/masks; returns the parameters with
// the lowest held-out BCE. Backgrounds of training images are swapped with
// `backgrounds` with probability bg_swap_prob when that set is non-empty.
Segmenter<float> train_segmenter(const std::vector<ImageSample>& source, const std::vector<ImageSample>& backgrounds,
                                 const SegmenterConfig& config, std::uint64_t seed, double bg_swap_prob,
                                 SegmenterTrainLog* log = nullptr);

}  // namespace fgmae
