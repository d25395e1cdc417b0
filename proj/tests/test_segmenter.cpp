#include "fgmae/segmenter.hpp"
#include "fgmae/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace fgmae;

namespace {

ImageSample blank(int size) {
  ImageSample s;
  s.height = s.width = size;
  s.pixels = Image::Random(Index(size) * size, 3).cwiseAbs();
  return s;
}

std::vector<ImageSample> split(Domain d, std::uint64_t stream, int n) {
  GeneratorConfig g;
  g.seed = 77;
  return generate_split(g, d == Domain::source ? DomainSpec::source() : DomainSpec::target(), stream, n,
                        to_string(d));
}

}  // namespace

TEST_CASE("segment shape and range") {
  Rng rng(1);
  auto seg = Segmenter<float>::init(SegmenterConfig{}, rng);
  const auto m = segment(seg, blank(64));
  CHECK(m.rows() == 64 * 64);
  CHECK(m.cols() == 1);
  CHECK(m.minCoeff() > 0.0f);
  CHECK(m.maxCoeff() < 1.0f);
  CHECK_THROWS_AS(segment(seg, blank(60)), InvalidShape);
}

TEST_CASE("zeroed output convolution gives one half") {
  Rng rng(2);
  auto seg = Segmenter<float>::init(SegmenterConfig{}, rng);
  seg.out.w.value.setZero();
  seg.out.b.value.setZero();
  CHECK((segment(seg, blank(32)).array() == 0.5f).all());
}

TEST_CASE("binarize, iou and bce") {
  CHECK(binarize(Image::Constant(4, 1, 0.9f)).isOnes());
  CHECK(binarize(Image::Constant(4, 1, 0.1f)).isZero());
  CHECK(binarize(Image::Constant(4, 1, 0.5f)).isOnes());

  Image a(4, 1), b(4, 1);
  a << 1, 1, 0, 0;
  b << 1, 0, 1, 0;
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(Image::Zero(4, 1), Image::Zero(4, 1)) == 1.0);

  Image y(4, 1);
  y << 1, 0, 1, 0.3f;
  CHECK(binary_cross_entropy(Image::Constant(4, 1, 0.5f), y) == doctest::Approx(std::log(2.0)));
  Image hard(2, 1);
  hard << 1, 0;
  CHECK(binary_cross_entropy(hard, hard) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("training requires masks") {
  auto src = split(Domain::source, 1, 4);
  src[2].mask.reset();
  SegmenterConfig c;
  c.train.steps = 2;
  c.train.warmup = 1;
  CHECK_THROWS_AS(train_segmenter(src, {}, c, 1, 0.0), MissingAnnotation);
}

TEST_CASE("segmenter training is deterministic") {
  const auto src = split(Domain::source, 1, 16);
  SegmenterConfig c;
  c.train.steps = 6;
  c.train.warmup = 2;
  c.train.batch = 4;
  c.eval_every = 3;
  SegmenterTrainLog l1, l2;
  auto s1 = train_segmenter(src, {}, c, 3, 0.0, &l1);
  auto s2 = train_segmenter(src, {}, c, 3, 0.0, &l2);
  CHECK(l1.train_loss == l2.train_loss);
  CHECK(segment(s1, src[0]) == segment(s2, src[0]));
}

TEST_CASE("toy segmenter: held-out IoU, domain gap and shift consistency") {
  GeneratorConfig g;
  g.seed = 5;
  const auto train = generate_split(g, DomainSpec::source(), 1, 256, "source");
  const auto bank = generate_split(g, DomainSpec::unconstrained(), 3, 64, "unconstrained");
  const auto test_src = generate_split(g, DomainSpec::source(), 4, 32, "source");
  const auto test_tgt = generate_split(g, DomainSpec::target(), 5, 32, "target");
  SegmenterConfig c;
  SegmenterTrainLog log;
  auto seg = train_segmenter(train, bank, c, 11, 0.0, &log);
  double src = 0.0, tgt = 0.0;
  for (const auto& s : test_src) src += iou(segment(seg, s), *s.mask) / test_src.size();
  for (const auto& s : test_tgt) tgt += iou(segment(seg, s), *s.mask) / test_tgt.size();
  MESSAGE("source IoU " << src << ", target IoU " << tgt);
  CHECK(src >= 0.7);
  CHECK(tgt < src);

  // Shift by one 8 px patch with wrap-around, then compare on the interior.
  double agreement = 0.0;
  for (int i = 0; i < 8; ++i) {
    const auto& s = test_src[i];
    ImageSample shifted = s;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) shifted.pixels.row(y * 64 + x) = s.pixels.row(y * 64 + (x + 56) % 64);
    const Image a = segment(seg, s), b = segment(seg, shifted);
    Image moved = Image::Zero(64 * 64, 1), direct = Image::Zero(64 * 64, 1);
    for (int y = 0; y < 64; ++y)
      for (int x = 8; x < 56; ++x) {
        moved(y * 64 + x + 8, 0) = a(y * 64 + x, 0);
        direct(y * 64 + x + 8, 0) = b(y * 64 + x + 8, 0);
      }
    agreement += iou(moved, direct) / 8.0;
  }
  CHECK(agreement >= 0.9);

  // the best-validation selection picks a step that was evaluated
  CHECK(log.best_step >= 0);
  double early = 0.0, late = 0.0;
  const std::size_t w = 30, n = log.train_loss.size();
  for (std::size_t i = 0; i < w; ++i) early += log.train_loss[i] / w, late += log.train_loss[n - w + i] / w;
  CHECK(late < early);
}
