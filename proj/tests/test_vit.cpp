#include "fgmae/vit.hpp"

#include <doctest.h>

#include <cmath>

using namespace fgmae;

namespace {

ModelConfig toy() { return ModelConfig::toy(); }

std::vector<Matrix<float>> random_patches(int batch, const ModelConfig& c, Rng& rng) {
  std::vector<Matrix<float>> out;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int b = 0; b < batch; ++b) {
    Matrix<float> p(c.num_patches(), c.patch_dim());
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    out.push_back(p);
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("transformer block with zeroed output maps is the identity") {
  Rng rng(1);
  auto p = BlockParams<double>::init("b", 8, 2, 4, rng);
  p.proj_w.value.setZero();
  p.proj_b.value.setZero();
  p.fc2_w.value.setZero();
  p.fc2_b.value.setZero();
  Matrix<double> x = Matrix<double>::Random(2 * 5, 8);
  Tape<double> t;
  auto out = transformer_block(t, t.constant(x), p, 2, 5);
  CHECK(t.value(out.tokens) == x);
}

TEST_CASE("transformer block attention rows are distributions") {
  Rng rng(2);
  auto p = BlockParams<double>::init("b", 8, 2, 4, rng);
  p.qkv_w.value *= 50.0;
  Tape<double> t;
  auto out = transformer_block(t, t.constant(Matrix<double>::Random(3 * 6, 8)), p, 3, 6);
  const auto& probs = t.value(out.probs);
  CHECK(probs.rows() == 3 * 2 * 6);
  CHECK(probs.minCoeff() >= 0.0);
  CHECK((probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("transformer block hand trace: one token, one head, d = 2") {
  Rng rng(3);
  auto p = BlockParams<double>::init("b", 2, 1, 1, rng);
  p.qkv_w.value << 0.3, -0.2, 0.7, 0.1, 1, 0,  //
      0.5, 0.4, -0.6, 0.9, 0, 1;               // V = identity, Q and K irrelevant for one token
  p.qkv_b.value.setZero();
  p.proj_w.value << 2, 0, 0, 1;
  p.proj_b.value << 0.5, 0;
  p.fc1_w.value.setIdentity();
  p.fc1_b.value.setZero();
  p.fc2_w.value.setIdentity();
  p.fc2_b.value.setZero();
  Matrix<double> f(1, 2);
  f << 1, 3;
  Tape<double> t;
  auto out = transformer_block(t, t.constant(f), p, 1, 1);

  // LN(1, 3) = (-1, 1) / sqrt(1 + eps); the single attention weight is 1.
  const double eps = 1e-6;
  const double c = 1.0 / std::sqrt(1.0 + eps);
  const double a1 = 1.0 + (-c * 2.0 + 0.5), a2 = 3.0 + c;
  const double m = 0.5 * (a1 + a2), v = 0.25 * (a1 - a2) * (a1 - a2);
  const double n1 = (a1 - m) / std::sqrt(v + eps), n2 = (a2 - m) / std::sqrt(v + eps);
  CHECK(t.value(out.tokens)(0, 0) == doctest::Approx(a1 + gelu(n1)).epsilon(1e-12));
  CHECK(t.value(out.tokens)(0, 1) == doctest::Approx(a2 + gelu(n2)).epsilon(1e-12));
  CHECK(t.value(out.probs)(0, 0) == 1.0);
}

TEST_CASE("width mismatch is rejected") {
  Rng rng(4);
  auto p = BlockParams<double>::init("b", 8, 2, 4, rng);
  Tape<double> t;
  CHECK_THROWS_AS(transformer_block(t, t.constant(Matrix<double>::Zero(4, 6)), p, 1, 4), InvalidShape);
}

TEST_CASE("encode shapes and attention stack") {
  Rng rng(5);
  const auto c = toy();
  auto enc = Encoder<float>::init(c, rng);
  const auto patches = random_patches(2, c, rng);
  {
    Tape<float> t;
    auto out = encode<float>(t, enc, patches);
    CHECK(t.value(out.tokens).rows() == 2 * 65);
    CHECK(t.value(out.tokens).cols() == c.embed_dim);
    const auto stacks = split_stacks<float>(t.value(attention_stack<float>(t, out, c.heads)), c.depth);
    REQUIRE(stacks.size() == 2);
    CHECK(stacks[0].rows.rows() == 4);
    CHECK(stacks[0].rows.cols() == 64);
    for (const auto& s : stacks) {
      const auto sums = s.rows.rowwise().sum();
      CHECK(sums.maxCoeff() < 1.0f);
      CHECK(sums.minCoeff() > 0.0f);
    }
    CHECK(t.value(patch_tokens<float>(t, out)).rows() == 2 * 64);
  }
  std::vector<BinaryMask> masks{generate_mask(64, 0.75, rng), generate_mask(64, 0.75, rng)};
  Tape<float> t;
  auto out = encode<float>(t, enc, patches, masks);
  CHECK(t.value(out.tokens).rows() == 2 * 17);
  CHECK(out.seq == 17);
  CHECK_THROWS_AS(attention_stack<float>(t, out, c.heads), InvalidShape);
}

TEST_CASE("masked-out patches never reach the encoder") {
  Rng rng(6);
  const auto c = toy();
  auto enc = Encoder<float>::init(c, rng);
  auto patches = random_patches(1, c, rng);
  std::vector<BinaryMask> masks{generate_mask(64, 0.75, rng)};
  Tape<float> t;
  const Matrix<float> a = t.value(encode<float>(t, enc, patches, masks).tokens);
  for (int i = 0; i < 64; ++i)
    if (masks[0][i]) patches[0].row(i).setRandom();
  const Matrix<float> b = t.value(encode<float>(t, enc, patches, masks).tokens);
  CHECK(a == b);
}

TEST_CASE("encode is deterministic per seed") {
  const auto c = toy();
  Rng r1(7), r2(7);
  auto e1 = Encoder<float>::init(c, r1);
  auto e2 = Encoder<float>::init(c, r2);
  Rng data(8);
  const auto patches = random_patches(2, c, data);
  Tape<float> t;
  CHECK(t.value(encode<float>(t, e1, patches).tokens) == t.value(encode<float>(t, e2, patches).tokens));
}

TEST_CASE("decoder output shape and zeroed prediction layer") {
  Rng rng(9);
  const auto c = toy();
  auto enc = Encoder<float>::init(c, rng);
  auto dec = Decoder<float>::init(c, rng);
  dec.pred_w.value.setZero();
  dec.pred_b.value = RowVector<float>::LinSpaced(c.patch_dim(), -1.0f, 1.0f);
  const auto patches = random_patches(2, c, rng);
  std::vector<BinaryMask> masks{generate_mask(64, 0.75, rng), generate_mask(64, 0.75, rng)};
  Tape<float> t;
  auto out = encode<float>(t, enc, patches, masks);
  const auto& x = t.value(decode<float>(t, dec, out, masks));
  CHECK(x.rows() == 2 * 64);
  CHECK(x.cols() == c.patch_dim());
  for (Index r = 0; r < x.rows(); ++r) CHECK(x.row(r) == dec.pred_b.value);
}

TEST_CASE("full-scale encoder and decoder shapes") {
  Rng rng(10);
  const auto c = ModelConfig::paper();
  auto enc = Encoder<float>::init(c, rng);
  auto dec = Decoder<float>::init(c, rng);
  std::vector<Matrix<float>> patches{Matrix<float>::Random(256, 768)};
  std::vector<BinaryMask> masks{generate_mask(256, 0.75, rng)};
  Tape<float> t;
  auto out = encode<float>(t, enc, patches, masks);
  CHECK(t.value(out.tokens).rows() == 65);
  CHECK(t.value(out.tokens).cols() == 768);
  const auto& x = t.value(decode<float>(t, dec, out, masks));
  CHECK(x.rows() == 256);
  CHECK(x.cols() == 768);
}

TEST_CASE("class attention: uniform rows and head averaging") {
  const int n = 4, m = n + 1;
  std::vector<Matrix<double>> uniform{Matrix<double>::Constant(2 * m, m, 1.0 / m)};
  const auto s = class_attention(uniform, 2, n);
  CHECK(s.rows.rows() == 1);
  CHECK((s.rows.array() - 1.0 / m).abs().maxCoeff() < 1e-15);

  Matrix<double> probs = Matrix<double>::Constant(2 * m, m, 0.2);
  probs.row(0) << 0.1, 0.2, 0.3, 0.15, 0.25;      // head 0, class row
  probs.row(m) << 0.3, 0.05, 0.05, 0.4, 0.2;      // head 1, class row
  const auto h = class_attention(std::vector<Matrix<double>>{probs}, 2, n);
  CHECK(h.rows(0, 0) == doctest::Approx(0.125));
  CHECK(h.rows(0, 1) == doctest::Approx(0.175));
  CHECK(h.rows(0, 2) == doctest::Approx(0.275));
  CHECK(h.rows(0, 3) == doctest::Approx(0.225));

  CHECK_THROWS_AS(class_attention(uniform, 2, n + 1), InvalidShape);
}
