#pragma once

// Vision-transformer encoder and the single-block masked-autoencoder decoder.
//
// Batches are processed as stacked token matrices: sample b occupies rows
// [b*seq, (b+1)*seq) and row 0 of each sample is the class token.

#include "fgmae/autograd.hpp"
#include "fgmae/datamodel.hpp"
#include "fgmae/patching.hpp"
#include "fgmae/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace fgmae {

// Truncated normal (|x| <= 2 std) used for every learned matrix.
template <typename T>
Matrix<T> trunc_normal(Index rows, Index cols, double std, Rng& rng);

template <typename T>
struct BlockParams {
  int heads = 1;
  Parameter<T> ln1_gamma, ln1_beta;
  Parameter<T> qkv_w, qkv_b;
  Parameter<T> proj_w, proj_b;
  Parameter<T> ln2_gamma, ln2_beta;
  Parameter<T> fc1_w, fc1_b;
  Parameter<T> fc2_w, fc2_b;

  static BlockParams init(const std::string& prefix, int dim, int heads, int mlp_ratio, Rng& rng);
  int dim() const { return static_cast<int>(qkv_w.value.rows()); }

  template <typename F>
  void for_each_parameter(F&& f) {
    for (Parameter<T>* p : {&ln1_gamma, &ln1_beta, &qkv_w, &qkv_b, &proj_w, &proj_b, &ln2_gamma, &ln2_beta, &fc1_w,
                            &fc1_b, &fc2_w, &fc2_b})
      f(*p);
  }
};

struct BlockOutput {
  Var tokens;
  Var probs;  // (batch*heads*seq) x seq, post-softmax
};

// F' = F + MHSA(LN(F));  F_next = F' + FFN(LN(F'))
template <typename T>
BlockOutput transformer_block(Tape<T>& t, Var tokens, BlockParams<T>& p, int batch, int seq);

template <typename T>
struct Encoder {
  int num_patches = 0;
  int patch_dim = 0;
  int dim = 0;
  int heads = 1;
  Parameter<T> patch_w, patch_b;
  Parameter<T> pos;  // (N+1) x d, row 0 belongs to the class token
  Parameter<T> cls;  // 1 x d
  std::vector<BlockParams<T>> blocks;

  static Encoder init(const ModelConfig& c, Rng& rng);

  template <typename F>
  void for_each_parameter(F&& f) {
    f(patch_w);
    f(patch_b);
    f(pos);
    f(cls);
    for (auto& b : blocks) b.for_each_parameter(f);
  }
  template <typename F>
  void for_each_buffer(F&&) {}
  void set_trainable(bool on) {
    for_each_parameter([on](Parameter<T>& p) { p.trainable = on; });
  }
};

struct EncoderOutput {
  Var tokens;                // (batch*seq) x d
  std::vector<Var> probs;    // one per block
  int batch = 0;
  int seq = 0;               // kept tokens + 1
  bool masked = false;
};

// patches[b] is the N x (P*P*3) patch matrix of sample b. With masks, only
// unmasked patches enter (pre-training); an empty span means all tokens
// (fine-tuning). All masks must keep the same number of tokens.
template <typename T>
EncoderOutput encode(Tape<T>& t, Encoder<T>& enc, std::span<const Matrix<T>> patches,
                     std::span<const BinaryMask> masks = {});

// Class-token attention of every block as one batch x (L*N) variable; block l
// occupies columns [l*N, (l+1)*N). Requires an all-token forward.
template <typename T>
Var attention_stack(Tape<T>& t, const EncoderOutput& out, int heads);

// Splits an attention_stack value into per-sample L x N stacks.
template <typename T>
std::vector<AttentionStack<T>> split_stacks(const Matrix<T>& stacked, int blocks);

// Drops the class row of every sample: (batch*N) x d, i.e. a channels-last
// sqrt(N) x sqrt(N) feature map per sample.
template <typename T>
Var patch_tokens(Tape<T>& t, const EncoderOutput& out);

template <typename T>
struct Decoder {
  int num_patches = 0;
  int dim = 0;
  Parameter<T> proj_w, proj_b;  // d_e -> d_d
  Parameter<T> mask_token;      // 1 x d_d
  Parameter<T> pos;             // (N+1) x d_d
  BlockParams<T> block;
  Parameter<T> pred_w, pred_b;  // d_d -> P*P*3

  static Decoder init(const ModelConfig& c, Rng& rng);

  template <typename F>
  void for_each_parameter(F&& f) {
    f(proj_w);
    f(proj_b);
    f(mask_token);
    f(pos);
    block.for_each_parameter(f);
    f(pred_w);
    f(pred_b);
  }
  template <typename F>
  void for_each_buffer(F&&) {}
};

// Reconstructs all N patches of every sample: (batch*N) x (P*P*3).
template <typename T>
Var decode(Tape<T>& t, Decoder<T>& dec, const EncoderOutput& enc, std::span<const BinaryMask> masks);

// Head-mean of the class-token row with the class position excluded.
// per_block[l] is a (heads*M) x M probability matrix for one sample.
template <typename T>
AttentionStack<T> class_attention(const std::vector<Matrix<T>>& per_block, int heads, int num_patches);

// Single-image convenience wrappers around the batched tape API.
template <typename T>
struct EncodeResult {
  Matrix<T> tokens;
  AttentionStack<T> stack;
};

template <typename T>
EncodeResult<T> encode_image(Encoder<T>& enc, const Image& pixels, const PatchGridSpec& spec,
                             const BinaryMask* mask = nullptr);

}  // namespace fgmae
