#include "gradcheck.hpp"

#include "fgmae/foreground.hpp"
#include "fgmae/keypoint_head.hpp"
#include "fgmae/losses.hpp"
#include "fgmae/optim.hpp"
#include "fgmae/vit.hpp"

#include <random>

namespace fgmae::testing {

namespace {

ModelConfig toy16() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.decoder_dim = 8;
  c.decoder_heads = 2;
  c.joints = 3;
  c.head_channels = 4;
  c.mask_ratio = 0.5;
  return c;
}

// Moves every parameter away from its near-zero initialisation so that
// attention, GELU and batch norm operate off their linear regimes.
template <typename Model>
void jitter(Model& m, Rng& rng, double std) {
  std::normal_distribution<double> n(0.0, std);
  m.for_each_parameter([&](Parameter<double>& p) {
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += n(rng);
  });
}

Matrix<double> randn(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

std::vector<LossCheck> toy_model_gradient_suite(std::uint64_t seed) {
  const ModelConfig c = toy16();
  Rng rng(seed);
  auto enc = Encoder<double>::init(c, rng);
  auto dec = Decoder<double>::init(c, rng);
  auto head = KeypointHead<double>::init(c, rng);
  auto other = Encoder<double>::init(c, rng);
  jitter(enc, rng, 0.3);
  jitter(dec, rng, 0.3);
  jitter(head, rng, 0.3);
  jitter(other, rng, 0.3);

  const int batch = 2;
  const int n = c.num_patches();
  const int s = c.heatmap_size();
  std::vector<Matrix<double>> patches;
  std::vector<BinaryMask> masks;
  std::vector<PatchWeights> weights;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int b = 0; b < batch; ++b) {
    patches.push_back(randn(n, c.patch_dim(), rng));
    masks.push_back(generate_mask(n, c.mask_ratio, rng));
    Eigen::VectorXd ratios(n);
    for (int i = 0; i < n; ++i) ratios(i) = u(rng);
    weights.push_back(patch_weights(ratios, c.alpha));
  }
  Matrix<double> recon_target(Index(batch) * n, c.patch_dim());
  for (int b = 0; b < batch; ++b) recon_target.middleRows(Index(b) * n, n) = patches[b] + randn(n, c.patch_dim(), rng);
  const Matrix<double> heat_target = randn(Index(batch) * s * s, Index(s) * c.joints, rng);

  Matrix<double> frozen;
  {
    Tape<double> t;
    auto out = encode<double>(t, other, patches);
    frozen = t.value(attention_stack<double>(t, out, c.heads));
  }

  auto kpt = [&](Tape<double>& t) {
    auto out = encode<double>(t, enc, patches);
    Var heat = head_forward(t, head, patch_tokens<double>(t, out), batch, true);
    return kpt_loss(t, heat, heat_target, batch);
  };
  auto attn = [&](Tape<double>& t) {
    auto out = encode<double>(t, enc, patches);
    return attn_loss(t, attention_stack<double>(t, out, c.heads), frozen, batch);
  };
  auto wmae = [&](Tape<double>& t) {
    auto out = encode<double>(t, enc, patches, masks);
    return wmae_loss(t, decode<double>(t, dec, out, masks), recon_target, weights, masks);
  };
  auto hpe = [&](Tape<double>& t) {
    auto out = encode<double>(t, enc, patches);
    Var heat = head_forward(t, head, patch_tokens<double>(t, out), batch, true);
    Var k = kpt_loss(t, heat, heat_target, batch);
    Var a = attn_loss(t, attention_stack<double>(t, out, c.heads), frozen, batch);
    return hpe_loss(t, k, a, c.lambda_attn);
  };

  std::vector<LossCheck> out;
  out.push_back({"L_WMAE", check_gradients(collect_parameters<double>(enc, dec), wmae)});
  out.push_back({"L_kpt", check_gradients(collect_parameters<double>(enc, head), kpt)});
  out.push_back({"L_attn", check_gradients(collect_parameters<double>(enc), attn)});
  out.push_back({"L_HPE", check_gradients(collect_parameters<double>(enc, head), hpe)});
  return out;
}

}  // namespace fgmae::testing
