#include "fgmae/vit.hpp"

#include <cmath>

namespace fgmae {

template <typename T>
Matrix<T> trunc_normal(Index rows, Index cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    double v;
    do v = dist(rng);
    while (std::abs(v) > 2.0);
    m.data()[i] = static_cast<T>(v * std);
  }
  return m;
}

namespace {

template <typename T>
Parameter<T> weight(const std::string& name, Index in, Index out, Rng& rng) {
  return Parameter<T>(name, trunc_normal<T>(in, out, 0.02, rng), true);
}

template <typename T>
Parameter<T> zeros(const std::string& name, Index cols) {
  return Parameter<T>(name, Matrix<T>::Zero(1, cols), false);
}

template <typename T>
Parameter<T> ones(const std::string& name, Index cols) {
  return Parameter<T>(name, Matrix<T>::Ones(1, cols), false);
}

}  // namespace

template <typename T>
BlockParams<T> BlockParams<T>::init(const std::string& prefix, int dim, int heads, int mlp_ratio, Rng& rng) {
  if (dim % heads != 0) throw InvalidShape("head count must divide the block width");
  BlockParams<T> p;
  p.heads = heads;
  const int hidden = dim * mlp_ratio;
  p.ln1_gamma = ones<T>(prefix + ".ln1.gamma", dim);
  p.ln1_beta = zeros<T>(prefix + ".ln1.beta", dim);
  p.qkv_w = weight<T>(prefix + ".attn.qkv.w", dim, 3 * dim, rng);
  p.qkv_b = zeros<T>(prefix + ".attn.qkv.b", 3 * dim);
  p.proj_w = weight<T>(prefix + ".attn.proj.w", dim, dim, rng);
  p.proj_b = zeros<T>(prefix + ".attn.proj.b", dim);
  p.ln2_gamma = ones<T>(prefix + ".ln2.gamma", dim);
  p.ln2_beta = zeros<T>(prefix + ".ln2.beta", dim);
  p.fc1_w = weight<T>(prefix + ".mlp.fc1.w", dim, hidden, rng);
  p.fc1_b = zeros<T>(prefix + ".mlp.fc1.b", hidden);
  p.fc2_w = weight<T>(prefix + ".mlp.fc2.w", hidden, dim, rng);
  p.fc2_b = zeros<T>(prefix + ".mlp.fc2.b", dim);
  return p;
}

template <typename T>
BlockOutput transformer_block(Tape<T>& t, Var tokens, BlockParams<T>& p, int batch, int seq) {
  if (t.value(tokens).cols() != p.dim()) throw InvalidShape("transformer_block: token width != block width");
  constexpr T eps = T(1e-6);
  Var h = layer_norm(t, tokens, t.parameter(p.ln1_gamma), t.parameter(p.ln1_beta), eps);
  Var qkv = linear(t, h, t.parameter(p.qkv_w), t.parameter(p.qkv_b));
  Var probs = attention_probs(t, qkv, batch, seq, p.heads);
  Var ctx = attention_apply(t, probs, qkv, batch, seq, p.heads);
  Var mid = add(t, tokens, linear(t, ctx, t.parameter(p.proj_w), t.parameter(p.proj_b)));
  Var h2 = layer_norm(t, mid, t.parameter(p.ln2_gamma), t.parameter(p.ln2_beta), eps);
  Var ff = linear(t, gelu(t, linear(t, h2, t.parameter(p.fc1_w), t.parameter(p.fc1_b))), t.parameter(p.fc2_w),
                  t.parameter(p.fc2_b));
  return {add(t, mid, ff), probs};
}

template <typename T>
Encoder<T> Encoder<T>::init(const ModelConfig& c, Rng& rng) {
  validate(c);
  Encoder<T> e;
  e.num_patches = c.num_patches();
  e.patch_dim = c.patch_dim();
  e.dim = c.embed_dim;
  e.heads = c.heads;
  e.patch_w = weight<T>("encoder.patch_embed.w", e.patch_dim, e.dim, rng);
  e.patch_b = zeros<T>("encoder.patch_embed.b", e.dim);
  e.pos = Parameter<T>("encoder.pos_embed", trunc_normal<T>(e.num_patches + 1, e.dim, 0.02, rng), false);
  e.cls = Parameter<T>("encoder.cls_token", trunc_normal<T>(1, e.dim, 0.02, rng), false);
  for (int l = 0; l < c.depth; ++l)
    e.blocks.push_back(BlockParams<T>::init("encoder.blocks." + std::to_string(l), e.dim, c.heads, c.mlp_ratio, rng));
  return e;
}

template <typename T>
EncoderOutput encode(Tape<T>& t, Encoder<T>& enc, std::span<const Matrix<T>> patches,
                     std::span<const BinaryMask> masks) {
  const int batch = static_cast<int>(patches.size());
  if (batch == 0) throw InvalidShape("encode: empty batch");
  if (!masks.empty() && masks.size() != patches.size()) throw InvalidShape("encode: one mask per sample required");

  std::vector<std::vector<Index>> kept(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const auto& p = patches[static_cast<std::size_t>(b)];
    if (p.rows() != enc.num_patches || p.cols() != enc.patch_dim)
      throw InvalidShape("encode: patch matrix must be " + std::to_string(enc.num_patches) + " x " +
                         std::to_string(enc.patch_dim));
    if (masks.empty()) {
      kept[b].resize(static_cast<std::size_t>(enc.num_patches));
      for (int i = 0; i < enc.num_patches; ++i) kept[b][i] = i;
    } else {
      if (static_cast<int>(masks[b].size()) != enc.num_patches) throw InvalidShape("encode: mask length != N");
      kept[b] = kept_indices(masks[b]);
    }
    if (kept[b].size() != kept[0].size()) throw InvalidShape("encode: masks keep different token counts");
  }
  const Index m = static_cast<Index>(kept[0].size());

  Matrix<T> selected(Index(batch) * m, enc.patch_dim);
  std::vector<Index> pos_rows;
  pos_rows.reserve(static_cast<std::size_t>(batch * m));
  for (int b = 0; b < batch; ++b)
    for (Index j = 0; j < m; ++j) {
      selected.row(Index(b) * m + j) = patches[b].row(kept[b][j]);
      pos_rows.push_back(kept[b][j] + 1);
    }

  Var pos = t.parameter(enc.pos);
  Var emb = linear(t, t.constant(std::move(selected)), t.parameter(enc.patch_w), t.parameter(enc.patch_b));
  emb = add(t, emb, gather_rows(t, pos, std::move(pos_rows)));
  Var cls = add(t, t.parameter(enc.cls), gather_rows(t, pos, {0}));

  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(batch * (m + 1)));
  for (int b = 0; b < batch; ++b) {
    order.push_back(0);
    for (Index j = 0; j < m; ++j) order.push_back(1 + Index(b) * m + j);
  }
  Var x = gather_rows(t, concat_rows(t, cls, emb), std::move(order));

  EncoderOutput out;
  out.batch = batch;
  out.seq = static_cast<int>(m + 1);
  out.masked = m != enc.num_patches;
  for (auto& blk : enc.blocks) {
    BlockOutput o = transformer_block(t, x, blk, batch, out.seq);
    x = o.tokens;
    out.probs.push_back(o.probs);
  }
  out.tokens = x;
  return out;
}

template <typename T>
Var attention_stack(Tape<T>& t, const EncoderOutput& out, int heads) {
  if (out.probs.empty()) throw InvalidShape("attention_stack: encoder has no blocks");
  if (out.masked) throw InvalidShape("attention_stack: needs every patch token, got a masked encoding");
  Var acc = class_attention(t, out.probs[0], out.batch, out.seq, heads);
  for (std::size_t l = 1; l < out.probs.size(); ++l)
    acc = concat_cols(t, acc, class_attention(t, out.probs[l], out.batch, out.seq, heads));
  return acc;
}

template <typename T>
std::vector<AttentionStack<T>> split_stacks(const Matrix<T>& stacked, int blocks) {
  if (blocks <= 0 || stacked.cols() % blocks != 0) throw InvalidShape("split_stacks: width not divisible by L");
  const Index n = stacked.cols() / blocks;
  std::vector<AttentionStack<T>> out(static_cast<std::size_t>(stacked.rows()));
  for (Index b = 0; b < stacked.rows(); ++b) {
    out[b].rows.resize(blocks, n);
    for (int l = 0; l < blocks; ++l) out[b].rows.row(l) = stacked.row(b).segment(Index(l) * n, n);
  }
  return out;
}

template <typename T>
Var patch_tokens(Tape<T>& t, const EncoderOutput& out) {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(out.batch * (out.seq - 1)));
  for (int b = 0; b < out.batch; ++b)
    for (int i = 1; i < out.seq; ++i) rows.push_back(Index(b) * out.seq + i);
  return gather_rows(t, out.tokens, std::move(rows));
}

template <typename T>
Decoder<T> Decoder<T>::init(const ModelConfig& c, Rng& rng) {
  validate(c);
  Decoder<T> d;
  d.num_patches = c.num_patches();
  d.dim = c.decoder_dim;
  d.proj_w = weight<T>("decoder.proj.w", c.embed_dim, c.decoder_dim, rng);
  d.proj_b = zeros<T>("decoder.proj.b", c.decoder_dim);
  d.mask_token = Parameter<T>("decoder.mask_token", trunc_normal<T>(1, c.decoder_dim, 0.02, rng), false);
  d.pos = Parameter<T>("decoder.pos_embed", trunc_normal<T>(d.num_patches + 1, c.decoder_dim, 0.02, rng), false);
  d.block = BlockParams<T>::init("decoder.block", c.decoder_dim, c.decoder_heads, c.mlp_ratio, rng);
  d.pred_w = weight<T>("decoder.pred.w", c.decoder_dim, c.patch_dim(), rng);
  d.pred_b = zeros<T>("decoder.pred.b", c.patch_dim());
  return d;
}

template <typename T>
Var decode(Tape<T>& t, Decoder<T>& dec, const EncoderOutput& enc, std::span<const BinaryMask> masks) {
  const int batch = enc.batch;
  const int n = dec.num_patches;
  if (static_cast<int>(masks.size()) != batch) throw InvalidShape("decode: one mask per sample required");
  if (t.value(enc.tokens).cols() != dec.proj_w.value.rows())
    throw InvalidShape("decode: encoder width does not match decoder projection");
  Var proj = linear(t, enc.tokens, t.parameter(dec.proj_w), t.parameter(dec.proj_b));
  const Index mask_row = Index(batch) * enc.seq;
  Var pool = concat_rows(t, proj, t.parameter(dec.mask_token));

  std::vector<Index> order;
  std::vector<Index> pos_rows;
  order.reserve(static_cast<std::size_t>(batch * (n + 1)));
  for (int b = 0; b < batch; ++b) {
    const auto& m = masks[static_cast<std::size_t>(b)];
    if (static_cast<int>(m.size()) != n) throw InvalidShape("decode: mask length != N");
    order.push_back(Index(b) * enc.seq);
    Index next = 1;
    for (int i = 0; i < n; ++i) order.push_back(m[i] ? mask_row : Index(b) * enc.seq + next++);
    if (next != enc.seq) throw InvalidShape("decode: encoded token count does not match the mask");
    for (int i = 0; i <= n; ++i) pos_rows.push_back(i);
  }
  Var x = gather_rows(t, pool, std::move(order));
  x = add(t, x, gather_rows(t, t.parameter(dec.pos), std::move(pos_rows)));
  x = transformer_block(t, x, dec.block, batch, n + 1).tokens;
  Var pred = linear(t, x, t.parameter(dec.pred_w), t.parameter(dec.pred_b));

  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(batch * n));
  for (int b = 0; b < batch; ++b)
    for (int i = 1; i <= n; ++i) keep.push_back(Index(b) * (n + 1) + i);
  return gather_rows(t, pred, std::move(keep));
}

template <typename T>
AttentionStack<T> class_attention(const std::vector<Matrix<T>>& per_block, int heads, int num_patches) {
  AttentionStack<T> s;
  s.rows.resize(static_cast<Index>(per_block.size()), num_patches);
  for (std::size_t l = 0; l < per_block.size(); ++l) {
    const auto& p = per_block[l];
    const Index m = p.cols();
    if (m != num_patches + 1 || p.rows() != Index(heads) * m)
      throw InvalidShape("class_attention: expected (heads*(N+1)) x (N+1) probabilities");
    RowVector<T> acc = RowVector<T>::Zero(num_patches);
    for (int h = 0; h < heads; ++h) acc += p.block(Index(h) * m, 1, 1, num_patches);
    s.rows.row(static_cast<Index>(l)) = acc / T(heads);
  }
  return s;
}

template <typename T>
EncodeResult<T> encode_image(Encoder<T>& enc, const Image& pixels, const PatchGridSpec& spec, const BinaryMask* mask) {
  Tape<T> t;
  std::vector<Matrix<T>> patches{patchify<T>(pixels.template cast<T>(), spec)};
  std::vector<BinaryMask> masks;
  if (mask) masks.push_back(*mask);
  EncoderOutput out = encode<T>(t, enc, patches, masks);
  EncodeResult<T> r;
  r.tokens = t.value(out.tokens);
  if (!mask) r.stack = split_stacks<T>(t.value(attention_stack(t, out, enc.heads)), static_cast<int>(enc.blocks.size()))[0];
  return r;
}

#define FGMAE_INSTANTIATE(T)                                                                                        \
  template Matrix<T> trunc_normal<T>(Index, Index, double, Rng&);                                                 \
  template struct BlockParams<T>;                                                                                 \
  template struct Encoder<T>;                                                                                     \
  template struct Decoder<T>;                                                                                     \
  template BlockOutput transformer_block<T>(Tape<T>&, Var, BlockParams<T>&, int, int);                            \
  template EncoderOutput encode<T>(Tape<T>&, Encoder<T>&, std::span<const Matrix<T>>, std::span<const BinaryMask>); \
  template Var attention_stack<T>(Tape<T>&, const EncoderOutput&, int);                                           \
  template std::vector<AttentionStack<T>> split_stacks<T>(const Matrix<T>&, int);                                 \
  template Var patch_tokens<T>(Tape<T>&, const EncoderOutput&);                                                   \
  template Var decode<T>(Tape<T>&, Decoder<T>&, const EncoderOutput&, std::span<const BinaryMask>);               \
  template AttentionStack<T> class_attention<T>(const std::vector<Matrix<T>>&, int, int);                         \
  template EncodeResult<T> encode_image<T>(Encoder<T>&, const Image&, const PatchGridSpec&, const BinaryMask*);

FGMAE_INSTANTIATE(float)
FGMAE_INSTANTIATE(double)

#undef FGMAE_INSTANTIATE

}  // namespace fgmae
