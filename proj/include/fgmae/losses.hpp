#pragma once

// Training objectives. Tape versions take batched variables and return the
// batch mean of the per-sample loss; value versions evaluate one sample and
// are implemented on top of the tape versions.

#include "fgmae/autograd.hpp"
#include "fgmae/datamodel.hpp"
#include "fgmae/patching.hpp"

#include <span>

namespace fgmae {

// (1/N) * sum_i w_i * m_i * ||xhat_i - x_i||^2 per sample; pred and target
// are (batch*N) x (P*P*3).
template <typename T>
Var wmae_loss(Tape<T>& t, Var pred, const Matrix<T>& target, std::span<const PatchWeights> weights,
              std::span<const BinaryMask> masks);

template <typename T>
T wmae_loss(const Matrix<T>& pred, const Matrix<T>& target, const PatchWeights& weights, const BinaryMask& mask);

// Squared L2 over all voxels per sample (optionally divided by the voxel count).
// pred and target use the head layout of head_forward.
template <typename T>
Var kpt_loss(Tape<T>& t, Var pred, const Matrix<T>& target, int batch, bool normalize = false);

// Throws InvalidCube when the two volumes do not share a cube/shape.
template <typename T>
T kpt_loss(const Heatmap3D<T>& pred, const Heatmap3D<T>& target);

// L1 distance between class-attention stacks per sample; `frozen` comes from
// the frozen copy and receives no gradient. pred is batch x (L*N).
template <typename T>
Var attn_loss(Tape<T>& t, Var pred, const Matrix<T>& frozen, int batch);

template <typename T>
T attn_loss(const AttentionStack<T>& encoder, const AttentionStack<T>& frozen);

// L_kpt + lambda * L_attn
template <typename T>
Var hpe_loss(Tape<T>& t, Var kpt, Var attn, double lambda);

double hpe_loss(double kpt, double attn, double lambda);

}  // namespace fgmae
