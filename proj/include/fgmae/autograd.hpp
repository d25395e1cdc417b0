#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Ops are layer-granular (linear, layer norm, attention, convolution, ...)
// with hand-written backward passes. A node records its value, a lazily
// allocated gradient, and a closure that pushes its gradient to its inputs.
// Nodes that depend only on constants carry no closure and are skipped.

#include "fgmae/errors.hpp"
#include "fgmae/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace fgmae {

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  Var constant(Matrix<T> value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Frozen parameters (trainable == false) become constants.
  Var parameter(Parameter<T>& p) {
    if (!p.trainable) return constant(p.value);
    Parameter<T>* target = &p;
    nodes_.push_back(Node{p.value, {}, true, [target](Tape& t, Var self) {
                            const auto& g = t.nodes_[self.id].grad;
                            if (target->grad.size() == 0) target->zero_grad();
                            target->grad += g;
                          }});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Records an op output. The closure is dropped when no input needs a gradient.
  Var record(Matrix<T> value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || requires_grad(in);
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  T scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulator of v, zero-initialised on first access.
  Matrix<T>& grad(Var v) {
    auto& n = nodes_.at(v.id);
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_.at(v.id).grad.size() != 0; }

  void backward(Var loss) {
    if (value(loss).size() != 1) throw InvalidShape("backward() needs a scalar loss");
    if (!requires_grad(loss)) return;
    grad(loss).setConstant(T(1));
    for (std::int32_t i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Dense ops
// ---------------------------------------------------------------------------

template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
// x * w + b, with b broadcast over rows.
template <typename T> Var linear(Tape<T>& t, Var x, Var w, Var b);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
// a (rows x n) + b (1 x n) broadcast
template <typename T> Var add_row(Tape<T>& t, Var a, Var row);
template <typename T> Var scale(Tape<T>& t, Var a, T factor);

template <typename T> Var relu(Tape<T>& t, Var x);
template <typename T> Var gelu(Tape<T>& t, Var x);
template <typename T> Var sigmoid(Tape<T>& t, Var x);

// Row-wise layer normalisation with per-column gain and offset.
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps);

// Picks rows by index; repeated indices accumulate on the way back.
template <typename T> Var gather_rows(Tape<T>& t, Var x, std::vector<Index> rows);
template <typename T> Var concat_rows(Tape<T>& t, Var a, Var b);
template <typename T> Var concat_cols(Tape<T>& t, Var a, Var b);

// ---------------------------------------------------------------------------
// Attention. qkv is (batch*seq) x 3d laid out [Q | K | V]; head h owns columns
// [h*dh, (h+1)*dh) of each third. Probabilities are stored as
// (batch*heads*seq) x seq, row ((b*heads + h)*seq + i).
// ---------------------------------------------------------------------------

template <typename T> Var attention_probs(Tape<T>& t, Var qkv, int batch, int seq, int heads);
template <typename T> Var attention_apply(Tape<T>& t, Var probs, Var qkv, int batch, int seq, int heads);
// Head-averaged attention of token 0 over tokens 1..seq-1: batch x (seq-1).
template <typename T> Var class_attention(Tape<T>& t, Var probs, int batch, int seq, int heads);

// ---------------------------------------------------------------------------
// Convolution on channels-last feature matrices.
// conv2d weight: (k*k*cin) x cout, column index of the patch = (ky*k + kx)*cin + c.
// conv_transpose2d weight: cin x (k*k*cout).
// ---------------------------------------------------------------------------

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, FeatureShape in, int kernel, int stride, int pad);
template <typename T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, FeatureShape in, int kernel, int stride, int pad);
template <typename T> Var max_pool2(Tape<T>& t, Var x, FeatureShape in);
template <typename T> Var upsample2(Tape<T>& t, Var x, FeatureShape in);

inline int conv_out_size(int n, int kernel, int stride, int pad) { return (n + 2 * pad - kernel) / stride + 1; }
inline int deconv_out_size(int n, int kernel, int stride, int pad) { return (n - 1) * stride - 2 * pad + kernel; }

// Batch normalisation over rows, per column. In training mode the running
// statistics are updated in place (momentum m: running = (1-m)*running + m*batch).
template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, Matrix<T>& running_mean, Matrix<T>& running_var,
               bool training, T momentum, T eps);

// ---------------------------------------------------------------------------
// Scalar reductions used by the losses. Targets are constants.
// ---------------------------------------------------------------------------

// factor * sum_r weight_r * ||pred_r - target_r||^2
template <typename T>
Var weighted_row_sse(Tape<T>& t, Var pred, const Matrix<T>& target, const Vector<T>& row_weight, T factor);
// factor * sum (pred - target)^2
template <typename T> Var sse(Tape<T>& t, Var pred, const Matrix<T>& target, T factor);
// factor * sum |pred - target|; the subgradient at 0 is 0
template <typename T> Var l1(Tape<T>& t, Var pred, const Matrix<T>& target, T factor);
// factor * sum BCE(sigmoid(logit), target)
template <typename T> Var bce_with_logits(Tape<T>& t, Var logits, const Matrix<T>& target, T factor);

}  // namespace fgmae
