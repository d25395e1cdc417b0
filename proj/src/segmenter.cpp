#include "fgmae/segmenter.hpp"

#include "fgmae/augmentation.hpp"
#include "fgmae/optim.hpp"
#include "fgmae/vit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fgmae {

namespace {

template <typename T>
ConvParams<T> make_conv(const std::string& name, int cin, int cout, int kernel, Rng& rng) {
  // He initialisation for ReLU layers
  const double std = std::sqrt(2.0 / double(kernel * kernel * cin));
  ConvParams<T> c;
  c.kernel = kernel;
  c.w = Parameter<T>(name + ".w", trunc_normal<T>(Index(kernel) * kernel * cin, cout, std, rng));
  c.b = Parameter<T>(name + ".b", Matrix<T>::Zero(1, cout), false);
  return c;
}

template <typename T>
Var conv(Tape<T>& t, Var x, ConvParams<T>& c, FeatureShape s) {
  return conv2d(t, x, t.parameter(c.w), t.parameter(c.b), s, c.kernel, 1, c.kernel / 2);
}

}  // namespace

template <typename T>
Segmenter<T> Segmenter<T>::init(const SegmenterConfig& c, Rng& rng) {
  if (c.levels < 0 || c.channels <= 0) throw InvalidParam("segmenter needs levels >= 0 and channels > 0");
  Segmenter<T> s;
  s.levels = c.levels;
  s.channels = c.channels;
  const int ch = c.channels;
  for (int l = 0; l <= c.levels; ++l) {
    const std::string p = "seg.down" + std::to_string(l);
    s.down.push_back(make_conv<T>(p + ".a", l == 0 ? 3 : ch, ch, 3, rng));
    s.down.push_back(make_conv<T>(p + ".b", ch, ch, 3, rng));
  }
  for (int l = c.levels - 1; l >= 0; --l) {
    const std::string p = "seg.up" + std::to_string(l);
    s.up.push_back(make_conv<T>(p + ".a", 2 * ch, ch, 3, rng));
    s.up.push_back(make_conv<T>(p + ".b", ch, ch, 3, rng));
  }
  s.out = make_conv<T>("seg.out", ch, 1, 1, rng);
  s.bn_gamma = Parameter<T>("seg.bn.gamma", Matrix<T>::Ones(1, ch), false);
  s.bn_beta = Parameter<T>("seg.bn.beta", Matrix<T>::Zero(1, ch), false);
  s.bn_mean = {"seg.bn.running_mean", Matrix<T>::Zero(1, ch)};
  s.bn_var = {"seg.bn.running_var", Matrix<T>::Ones(1, ch)};
  return s;
}

template <typename T>
Var segment_logits(Tape<T>& t, Segmenter<T>& seg, const Matrix<T>& images, FeatureShape shape, bool training) {
  const int div = 1 << seg.levels;
  if (shape.height % div != 0 || shape.width % div != 0)
    throw InvalidShape("segment: image dims must be multiples of " + std::to_string(div));
  if (images.rows() != shape.rows() || images.cols() != 3) throw InvalidShape("segment: expected (B*H*W) x 3 pixels");
  std::vector<Var> skips;
  std::vector<FeatureShape> shapes;
  Var x = t.constant(images);
  FeatureShape s = shape;
  for (int l = 0; l <= seg.levels; ++l) {
    if (l > 0) {
      x = max_pool2(t, x, s);
      s = {s.batch, s.height / 2, s.width / 2};
    }
    x = conv(t, x, seg.down[2 * l], s);
    if (l == 0)
      x = batch_norm(t, x, t.parameter(seg.bn_gamma), t.parameter(seg.bn_beta), seg.bn_mean.value, seg.bn_var.value,
                     training, T(0.1), T(1e-5));
    x = relu(t, x);
    x = relu(t, conv(t, x, seg.down[2 * l + 1], s));
    skips.push_back(x);
    shapes.push_back(s);
  }
  for (int i = 0; i < seg.levels; ++i) {
    const int l = seg.levels - 1 - i;
    x = upsample2(t, x, s);
    s = shapes[l];
    x = concat_cols(t, x, skips[l]);
    x = relu(t, conv(t, x, seg.up[2 * i], s));
    x = relu(t, conv(t, x, seg.up[2 * i + 1], s));
  }
  return conv(t, x, seg.out, s);
}

Image segment(Segmenter<float>& seg, const ImageSample& sample) {
  Tape<float> t;
  Var logits = segment_logits(t, seg, sample.pixels, {1, sample.height, sample.width}, false);
  const Matrix<float>& z = t.value(logits);
  return (1.0f / (1.0f + (-z.array()).exp())).matrix();
}

Image binarize(const Image& soft, float threshold) {
  return (soft.array() >= threshold).cast<float>().matrix();
}

double iou(const Image& a, const Image& b, float threshold) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidShape("iou: mask shapes differ");
  const auto ba = a.array() >= threshold, bb = b.array() >= threshold;
  const double inter = (ba && bb).count(), uni = (ba || bb).count();
  return uni == 0.0 ? 1.0 : inter / uni;
}

double binary_cross_entropy(const Image& p, const Image& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols() || p.size() == 0)
    throw InvalidShape("binary_cross_entropy: shapes differ");
  constexpr double eps = 1e-12;
  double sum = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = std::clamp(double(p.data()[i]), eps, 1.0 - eps), yi = y.data()[i];
    sum -= yi * std::log(pi) + (1.0 - yi) * std::log(1.0 - pi);
  }
  return sum / double(p.size());
}

namespace {

double validation_bce(Segmenter<float>& seg, const std::vector<const ImageSample*>& val) {
  double sum = 0.0;
  for (const auto* s : val) sum += binary_cross_entropy(segment(seg, *s), *s->mask);
  return val.empty() ? 0.0 : sum / double(val.size());
}

}  // namespace

Segmenter<float> train_segmenter(const std::vector<ImageSample>& source, const std::vector<ImageSample>& backgrounds,
                                 const SegmenterConfig& config, std::uint64_t seed, double bg_swap_prob,
                                 SegmenterTrainLog* log) {
  if (source.empty()) throw InvalidParam("train_segmenter: empty source set");
  for (const auto& s : source)
    if (!s.mask) throw MissingAnnotation("train_segmenter: sample " + s.sample_id + " has no mask");
  const auto& tc = config.train;
  if (tc.steps <= 0 || tc.batch <= 0) throw InvalidParam("train_segmenter: steps and batch must be positive");

  const int n_val = std::min<int>(static_cast<int>(source.size()) - 1,
                                  static_cast<int>(std::lround(config.val_fraction * double(source.size()))));
  std::vector<const ImageSample*> train, val;
  for (std::size_t i = 0; i < source.size(); ++i)
    (i + n_val < source.size() ? train : val).push_back(&source[i]);

  Rng rng(mix_seed(seed, 0x5e6));
  Segmenter<float> seg = Segmenter<float>::init(config, rng);
  Segmenter<float> best = seg;
  double best_val = std::numeric_limits<double>::infinity();
  AdamW<float> opt({0.9, 0.999, 1e-8, tc.weight_decay});
  const Schedule sched{tc.warmup, tc.steps, tc.lr, tc.min_lr};
  const auto params = collect_parameters<float>(seg);
  const int h = train.front()->height, w = train.front()->width;
  const Index px = Index(h) * w;

  auto evaluate = [&](int step) {
    if (val.empty()) {
      best = seg;
      if (log) log->best_step = step;
      return;
    }
    const double v = validation_bce(seg, val);
    if (log) log->val_loss.emplace_back(step, v);
    if (v < best_val) {
      best_val = v;
      best = seg;
      if (log) log->best_step = step;
    }
  };

  for (int step = 0; step < tc.steps; ++step) {
    Matrix<float> images(px * tc.batch, 3), targets(px * tc.batch, 1);
    for (int b = 0; b < tc.batch; ++b) {
      const ImageSample& s = *train[static_cast<std::size_t>(uniform_int(rng, 0, int(train.size()) - 1))];
      if (s.height != h || s.width != w) throw InvalidShape("train_segmenter: mixed image sizes");
      const bool swap = !backgrounds.empty() && uniform(rng, 0.0, 1.0) < bg_swap_prob;
      if (swap) {
        const auto& bg = backgrounds[static_cast<std::size_t>(uniform_int(rng, 0, int(backgrounds.size()) - 1))];
        images.middleRows(b * px, px) = background_swap(s.pixels, *s.mask, bg.pixels);
      } else {
        images.middleRows(b * px, px) = s.pixels;
      }
      targets.middleRows(b * px, px) = *s.mask;
    }
    zero_grads(params);
    Tape<float> t;
    Var logits = segment_logits(t, seg, images, {tc.batch, h, w}, true);
    Var loss = bce_with_logits(t, logits, targets, 1.0f / float(targets.rows()));
    t.backward(loss);
    opt.step(params, lr_at(step, sched));
    if (log) log->train_loss.push_back(t.scalar(loss));
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0) evaluate(step + 1);
  }
  if (config.eval_every <= 0 || tc.steps % config.eval_every != 0) evaluate(tc.steps);
  return best;
}

template struct Segmenter<float>;
template struct Segmenter<double>;
template Var segment_logits<float>(Tape<float>&, Segmenter<float>&, const Matrix<float>&, FeatureShape, bool);
template Var segment_logits<double>(Tape<double>&, Segmenter<double>&, const Matrix<double>&, FeatureShape, bool);

}  // namespace fgmae
