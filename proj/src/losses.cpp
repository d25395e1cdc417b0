#include "fgmae/losses.hpp"

namespace fgmae {

template <typename T>
Var wmae_loss(Tape<T>& t, Var pred, const Matrix<T>& target, std::span<const PatchWeights> weights,
              std::span<const BinaryMask> masks) {
  const auto batch = static_cast<Index>(weights.size());
  if (batch == 0 || masks.size() != weights.size()) throw InvalidShape("wmae_loss: one weight set and mask per sample");
  const Index n = weights[0].weights.size();
  if (t.value(pred).rows() != batch * n || target.rows() != batch * n)
    throw InvalidShape("wmae_loss: expected batch*N patch rows");
  Vector<T> row_weight(batch * n);
  for (Index b = 0; b < batch; ++b) {
    if (weights[b].weights.size() != n || static_cast<Index>(masks[b].size()) != n)
      throw InvalidShape("wmae_loss: weights and mask must have N entries");
    for (Index i = 0; i < n; ++i) row_weight(b * n + i) = T(weights[b].weights(i) * masks[b][i]);
  }
  return weighted_row_sse(t, pred, target, row_weight, T(1) / T(n * batch));
}

template <typename T>
T wmae_loss(const Matrix<T>& pred, const Matrix<T>& target, const PatchWeights& weights, const BinaryMask& mask) {
  Tape<T> t;
  Var p = t.constant(pred);
  return t.scalar(wmae_loss<T>(t, p, target, std::span(&weights, 1), std::span(&mask, 1)));
}

template <typename T>
Var kpt_loss(Tape<T>& t, Var pred, const Matrix<T>& target, int batch, bool normalize) {
  if (batch <= 0) throw InvalidShape("kpt_loss: empty batch");
  const T voxels = T(t.value(pred).size()) / T(batch);
  const T factor = normalize ? T(1) / (voxels * T(batch)) : T(1) / T(batch);
  return sse(t, pred, target, factor);
}

template <typename T>
T kpt_loss(const Heatmap3D<T>& pred, const Heatmap3D<T>& target) {
  if (!(pred.cube == target.cube) || pred.size != target.size || pred.joints != target.joints)
    throw InvalidCube("kpt_loss: heatmaps do not share a cube");
  return (pred.volume - target.volume).squaredNorm();
}

template <typename T>
Var attn_loss(Tape<T>& t, Var pred, const Matrix<T>& frozen, int batch) {
  if (batch <= 0 || t.value(pred).rows() != batch) throw InvalidShape("attn_loss: one stack row per sample");
  return l1(t, pred, frozen, T(1) / T(batch));
}

template <typename T>
T attn_loss(const AttentionStack<T>& encoder, const AttentionStack<T>& frozen) {
  if (encoder.rows.rows() != frozen.rows.rows() || encoder.rows.cols() != frozen.rows.cols())
    throw InvalidShape("attn_loss: stacks differ in shape");
  return (encoder.rows - frozen.rows).cwiseAbs().sum();
}

template <typename T>
Var hpe_loss(Tape<T>& t, Var kpt, Var attn, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidParam("hpe_loss: lambda must be >= 0");
  return add(t, kpt, scale(t, attn, T(lambda)));
}

double hpe_loss(double kpt, double attn, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidParam("hpe_loss: lambda must be >= 0");
  return kpt + lambda * attn;
}

#define FGMAE_INSTANTIATE(T)                                                                                    \
  template Var wmae_loss<T>(Tape<T>&, Var, const Matrix<T>&, std::span<const PatchWeights>,                    \
                            std::span<const BinaryMask>);                                                      \
  template T wmae_loss<T>(const Matrix<T>&, const Matrix<T>&, const PatchWeights&, const BinaryMask&);         \
  template Var kpt_loss<T>(Tape<T>&, Var, const Matrix<T>&, int, bool);                                        \
  template T kpt_loss<T>(const Heatmap3D<T>&, const Heatmap3D<T>&);                                            \
  template Var attn_loss<T>(Tape<T>&, Var, const Matrix<T>&, int);                                             \
  template T attn_loss<T>(const AttentionStack<T>&, const AttentionStack<T>&);                                 \
  template Var hpe_loss<T>(Tape<T>&, Var, Var, double);

FGMAE_INSTANTIATE(float)
FGMAE_INSTANTIATE(double)

#undef FGMAE_INSTANTIATE

}  // namespace fgmae
