#include "fgmae/autograd.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>

namespace fgmae {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw InvalidShape(what);
}

template <typename T>
void accumulate(Tape<T>& t, Var v, const Matrix<T>& g) {
  if (t.requires_grad(v)) t.grad(v) += g;
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Matrix<T> out = A * B;
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  const auto& B = t.value(b);
  require(X.cols() == W.rows(), "linear: input width does not match weight rows");
  require(B.rows() == 1 && B.cols() == W.cols(), "linear: bias shape");
  Matrix<T> out(X.rows(), W.cols());
  out.noalias() = X * W;
  out.rowwise() += B.row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(x)) t.grad(x).noalias() += g * t.value(w).transpose();
    if (t.requires_grad(w)) t.grad(w).noalias() += t.value(x).transpose() * g;
    if (t.requires_grad(b)) t.grad(b) += g.colwise().sum();
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add: shapes differ");
  Matrix<T> out = t.value(a) + t.value(b);
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

template <typename T>
Var add_row(Tape<T>& t, Var a, Var row) {
  const auto& R = t.value(row);
  require(R.rows() == 1 && R.cols() == t.value(a).cols(), "add_row: row shape");
  Matrix<T> out = t.value(a);
  out.rowwise() += R.row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    accumulate(t, a, g);
    if (t.requires_grad(row)) t.grad(row) += g.colwise().sum();
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T factor) {
  Matrix<T> out = t.value(a) * factor;
  return t.record(std::move(out), {a}, [a, factor](Tape<T>& t, Var self) {
    t.grad(a) += t.grad(self) * factor;
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).cwiseMax(T(0));
  return t.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const auto& X = t.value(x);
    t.grad(x) += (X.array() > T(0)).select(t.grad(self), T(0)).matrix();
  });
}

template <typename T>
Var gelu(Tape<T>& t, Var x) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  const auto& X = t.value(x);
  Matrix<T> out = (T(0.5) * X.array() * (T(1) + (X.array() * inv_sqrt2).erf())).matrix();
  return t.record(std::move(out), {x}, [x, inv_sqrt2](Tape<T>& t, Var self) {
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    const auto X = t.value(x).array();
    t.grad(x).array() += t.grad(self).array() * (T(0.5) * (T(1) + (X * inv_sqrt2).erf()) +
                                                 X * inv_sqrt2pi * (T(-0.5) * X.square()).exp());
  });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  Matrix<T> out = t.value(x).unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return t.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const auto& y = t.value(self);
    t.grad(x) += t.grad(self).cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix()));
  });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
  const auto& X = t.value(x);
  const Index n = X.cols();
  require(t.value(gamma).cols() == n && t.value(beta).cols() == n, "layer_norm: parameter width");
  Matrix<T> xhat(X.rows(), n);
  Vector<T> inv_std(X.rows());
  for (Index r = 0; r < X.rows(); ++r) {
    const T mean = X.row(r).mean();
    const T var = (X.row(r).array() - mean).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Matrix<T> out = xhat.array().rowwise() * t.value(gamma).row(0).array();
  out.rowwise() += t.value(beta).row(0);
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, Var self) {
                    const auto& g = t.grad(self);
                    if (t.requires_grad(gamma)) t.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
                    if (t.requires_grad(beta)) t.grad(beta) += g.colwise().sum();
                    if (!t.requires_grad(x)) return;
                    const Index n = g.cols();
                    Matrix<T> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                    auto& dx = t.grad(x);
                    for (Index r = 0; r < g.rows(); ++r) {
                      const T s1 = dxhat.row(r).sum();
                      const T s2 = dxhat.row(r).dot(xhat.row(r));
                      dx.row(r).array() +=
                          inv_std(r) / T(n) * (T(n) * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
                    }
                  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::vector<Index> rows) {
  const auto& X = t.value(x);
  Matrix<T> out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < X.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = X.row(rows[i]);
  }
  return t.record(std::move(out), {x}, [x, rows = std::move(rows)](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += g.row(static_cast<Index>(i));
  });
}

template <typename T>
Var concat_rows(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.cols() == B.cols(), "concat_rows: widths differ");
  Matrix<T> out(A.rows() + B.rows(), A.cols());
  out.topRows(A.rows()) = A;
  out.bottomRows(B.rows()) = B;
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const Index ra = t.value(a).rows();
    if (t.requires_grad(a)) t.grad(a) += g.topRows(ra);
    if (t.requires_grad(b)) t.grad(b) += g.bottomRows(g.rows() - ra);
  });
}

template <typename T>
Var concat_cols(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.rows() == B.rows(), "concat_cols: heights differ");
  Matrix<T> out(A.rows(), A.cols() + B.cols());
  out.leftCols(A.cols()) = A;
  out.rightCols(B.cols()) = B;
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const Index ca = t.value(a).cols();
    if (t.requires_grad(a)) t.grad(a) += g.leftCols(ca);
    if (t.requires_grad(b)) t.grad(b) += g.rightCols(g.cols() - ca);
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

template <typename T>
Var attention_probs(Tape<T>& t, Var qkv, int batch, int seq, int heads) {
  const auto& QKV = t.value(qkv);
  require(QKV.rows() == Index(batch) * seq, "attention: row count != batch*seq");
  require(QKV.cols() % 3 == 0 && (QKV.cols() / 3) % heads == 0, "attention: width not divisible by heads");
  const Index d = QKV.cols() / 3;
  const Index dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  Matrix<T> probs(Index(batch) * heads * seq, seq);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto q = QKV.block(Index(b) * seq, h * dh, seq, dh);
      auto k = QKV.block(Index(b) * seq, d + h * dh, seq, dh);
      auto p = probs.block((Index(b) * heads + h) * seq, 0, seq, seq);
      p.noalias() = (q * k.transpose()) * scale;
      for (Index i = 0; i < seq; ++i) {
        const T mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
    }
  }
  return t.record(std::move(probs), {qkv}, [qkv, batch, seq, heads, d, dh, scale](Tape<T>& t, Var self) {
    const auto& P = t.value(self);
    const auto& G = t.grad(self);
    const auto& QKV = t.value(qkv);
    auto& dQKV = t.grad(qkv);
    Matrix<T> ds(seq, seq);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Index r0 = (Index(b) * heads + h) * seq;
        auto p = P.block(r0, 0, seq, seq);
        auto g = G.block(r0, 0, seq, seq);
        Vector<T> dot = g.cwiseProduct(p).rowwise().sum();
        ds = p.cwiseProduct((g.colwise() - dot).matrix()) * scale;
        auto q = QKV.block(Index(b) * seq, h * dh, seq, dh);
        auto k = QKV.block(Index(b) * seq, d + h * dh, seq, dh);
        dQKV.block(Index(b) * seq, h * dh, seq, dh).noalias() += ds * k;
        dQKV.block(Index(b) * seq, d + h * dh, seq, dh).noalias() += ds.transpose() * q;
      }
    }
  });
}

template <typename T>
Var attention_apply(Tape<T>& t, Var probs, Var qkv, int batch, int seq, int heads) {
  const auto& P = t.value(probs);
  const auto& QKV = t.value(qkv);
  const Index d = QKV.cols() / 3;
  const Index dh = d / heads;
  require(P.rows() == Index(batch) * heads * seq && P.cols() == seq, "attention_apply: probability shape");
  Matrix<T> out(Index(batch) * seq, d);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto p = P.block((Index(b) * heads + h) * seq, 0, seq, seq);
      auto v = QKV.block(Index(b) * seq, 2 * d + h * dh, seq, dh);
      out.block(Index(b) * seq, h * dh, seq, dh).noalias() = p * v;
    }
  }
  return t.record(std::move(out), {probs, qkv}, [probs, qkv, batch, seq, heads, d, dh](Tape<T>& t, Var self) {
    const auto& G = t.grad(self);
    const auto& P = t.value(probs);
    const auto& QKV = t.value(qkv);
    const bool need_p = t.requires_grad(probs);
    const bool need_v = t.requires_grad(qkv);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Index r0 = (Index(b) * heads + h) * seq;
        auto g = G.block(Index(b) * seq, h * dh, seq, dh);
        if (need_p) {
          auto v = QKV.block(Index(b) * seq, 2 * d + h * dh, seq, dh);
          t.grad(probs).block(r0, 0, seq, seq).noalias() += g * v.transpose();
        }
        if (need_v) {
          auto p = P.block(r0, 0, seq, seq);
          t.grad(qkv).block(Index(b) * seq, 2 * d + h * dh, seq, dh).noalias() += p.transpose() * g;
        }
      }
    }
  });
}

template <typename T>
Var class_attention(Tape<T>& t, Var probs, int batch, int seq, int heads) {
  const auto& P = t.value(probs);
  require(P.rows() == Index(batch) * heads * seq && P.cols() == seq, "class_attention: probability shape");
  Matrix<T> out = Matrix<T>::Zero(batch, seq - 1);
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h) out.row(b) += P.block((Index(b) * heads + h) * seq, 1, 1, seq - 1);
  out /= T(heads);
  return t.record(std::move(out), {probs}, [probs, batch, seq, heads](Tape<T>& t, Var self) {
    const auto& G = t.grad(self);
    auto& dP = t.grad(probs);
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h)
        dP.block((Index(b) * heads + h) * seq, 1, 1, seq - 1) += G.row(b) / T(heads);
  });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace {

// cols row = output pixel, column = (ky*k + kx)*cin + c
template <typename T>
Matrix<T> im2col(const Matrix<T>& x, FeatureShape in, int k, int stride, int pad, int ho, int wo) {
  const Index cin = x.cols();
  Matrix<T> cols = Matrix<T>::Zero(Index(in.batch) * ho * wo, Index(k) * k * cin);
  for (int b = 0; b < in.batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const Index r = (Index(b) * ho + oy) * wo + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in.width) continue;
            cols.row(r).segment((Index(ky) * k + kx) * cin, cin) = x.row((Index(b) * in.height + iy) * in.width + ix);
          }
        }
      }
  return cols;
}

template <typename T>
void col2im_add(const Matrix<T>& cols, Matrix<T>& dx, FeatureShape in, int k, int stride, int pad, int ho, int wo) {
  const Index cin = dx.cols();
  for (int b = 0; b < in.batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const Index r = (Index(b) * ho + oy) * wo + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in.width) continue;
            dx.row((Index(b) * in.height + iy) * in.width + ix) += cols.row(r).segment((Index(ky) * k + kx) * cin, cin);
          }
        }
      }
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, FeatureShape in, int kernel, int stride, int pad) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  require(X.rows() == in.rows(), "conv2d: row count does not match feature shape");
  require(W.rows() == Index(kernel) * kernel * X.cols(), "conv2d: weight rows != k*k*cin");
  require(t.value(b).cols() == W.cols(), "conv2d: bias width");
  const int ho = conv_out_size(in.height, kernel, stride, pad);
  const int wo = conv_out_size(in.width, kernel, stride, pad);
  Matrix<T> cols = im2col(X, in, kernel, stride, pad, ho, wo);
  Matrix<T> out(cols.rows(), W.cols());
  out.noalias() = cols * W;
  out.rowwise() += t.value(b).row(0);
  return t.record(std::move(out), {x, w, b},
                  [x, w, b, in, kernel, stride, pad, ho, wo, cols = std::move(cols)](Tape<T>& t, Var self) {
                    const auto& g = t.grad(self);
                    if (t.requires_grad(w)) t.grad(w).noalias() += cols.transpose() * g;
                    if (t.requires_grad(b)) t.grad(b) += g.colwise().sum();
                    if (t.requires_grad(x)) {
                      Matrix<T> dcols = g * t.value(w).transpose();
                      col2im_add(dcols, t.grad(x), in, kernel, stride, pad, ho, wo);
                    }
                  });
}

template <typename T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, FeatureShape in, int kernel, int stride, int pad) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  require(X.rows() == in.rows(), "conv_transpose2d: row count does not match feature shape");
  require(W.rows() == X.cols() && W.cols() % (Index(kernel) * kernel) == 0, "conv_transpose2d: weight shape");
  const Index cout = W.cols() / (Index(kernel) * kernel);
  require(t.value(b).cols() == cout, "conv_transpose2d: bias width");
  const int ho = deconv_out_size(in.height, kernel, stride, pad);
  const int wo = deconv_out_size(in.width, kernel, stride, pad);
  // Each input pixel scatters a k*k*cout block; this is the adjoint of im2col
  // on the output grid, so the scatter/gather helpers are reused with roles swapped.
  const FeatureShape outer{in.batch, ho, wo};
  Matrix<T> cols(X.rows(), W.cols());
  cols.noalias() = X * W;
  Matrix<T> out = Matrix<T>::Zero(outer.rows(), cout);
  col2im_add(cols, out, outer, kernel, stride, pad, in.height, in.width);
  out.rowwise() += t.value(b).row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b, in, outer, kernel, stride, pad](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(b)) t.grad(b) += g.colwise().sum();
    if (!t.requires_grad(x) && !t.requires_grad(w)) return;
    Matrix<T> dcols = im2col(g, outer, kernel, stride, pad, in.height, in.width);
    if (t.requires_grad(w)) t.grad(w).noalias() += t.value(x).transpose() * dcols;
    if (t.requires_grad(x)) t.grad(x).noalias() += dcols * t.value(w).transpose();
  });
}

template <typename T>
Var max_pool2(Tape<T>& t, Var x, FeatureShape in) {
  const auto& X = t.value(x);
  require(X.rows() == in.rows(), "max_pool2: row count does not match feature shape");
  require(in.height % 2 == 0 && in.width % 2 == 0, "max_pool2: odd spatial size");
  const int ho = in.height / 2, wo = in.width / 2;
  const Index c = X.cols();
  Matrix<T> out(Index(in.batch) * ho * wo, c);
  std::vector<Index> arg(static_cast<std::size_t>(out.size()));
  for (int b = 0; b < in.batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const Index r = (Index(b) * ho + oy) * wo + ox;
        for (Index ch = 0; ch < c; ++ch) {
          Index best = -1;
          T bv = T(0);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const Index src = (Index(b) * in.height + 2 * oy + dy) * in.width + 2 * ox + dx;
              if (best < 0 || X(src, ch) > bv) {
                best = src;
                bv = X(src, ch);
              }
            }
          out(r, ch) = bv;
          arg[static_cast<std::size_t>(r * c + ch)] = best;
        }
      }
  return t.record(std::move(out), {x}, [x, c, arg = std::move(arg)](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x);
    for (Index r = 0; r < g.rows(); ++r)
      for (Index ch = 0; ch < c; ++ch) dx(arg[static_cast<std::size_t>(r * c + ch)], ch) += g(r, ch);
  });
}

template <typename T>
Var upsample2(Tape<T>& t, Var x, FeatureShape in) {
  const auto& X = t.value(x);
  require(X.rows() == in.rows(), "upsample2: row count does not match feature shape");
  const int ho = in.height * 2, wo = in.width * 2;
  Matrix<T> out(Index(in.batch) * ho * wo, X.cols());
  for (int b = 0; b < in.batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        out.row((Index(b) * ho + oy) * wo + ox) = X.row((Index(b) * in.height + oy / 2) * in.width + ox / 2);
  return t.record(std::move(out), {x}, [x, in, ho, wo](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x);
    for (int b = 0; b < in.batch; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          dx.row((Index(b) * in.height + oy / 2) * in.width + ox / 2) += g.row((Index(b) * ho + oy) * wo + ox);
  });
}

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, Matrix<T>& running_mean, Matrix<T>& running_var,
               bool training, T momentum, T eps) {
  const auto& X = t.value(x);
  const Index n = X.rows();
  require(t.value(gamma).cols() == X.cols(), "batch_norm: parameter width");
  RowVector<T> mean, var;
  if (training) {
    require(n > 1, "batch_norm: training mode needs more than one row");
    mean = X.colwise().mean();
    var = (X.rowwise() - mean).array().square().colwise().mean();
    running_mean.row(0) = (T(1) - momentum) * running_mean.row(0) + momentum * mean;
    running_var.row(0) = (T(1) - momentum) * running_var.row(0) + momentum * var * (T(n) / T(n - 1));
  } else {
    mean = running_mean.row(0);
    var = running_var.row(0);
  }
  RowVector<T> inv_std = (var.array() + eps).rsqrt();
  Matrix<T> xhat = (X.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<T> out = xhat.array().rowwise() * t.value(gamma).row(0).array();
  out.rowwise() += t.value(beta).row(0);
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, training, xhat = std::move(xhat), inv_std](Tape<T>& t, Var self) {
                    const auto& g = t.grad(self);
                    if (t.requires_grad(gamma)) t.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
                    if (t.requires_grad(beta)) t.grad(beta) += g.colwise().sum();
                    if (!t.requires_grad(x)) return;
                    Matrix<T> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                    if (!training) {
                      t.grad(x) += (dxhat.array().rowwise() * inv_std.array()).matrix();
                      return;
                    }
                    const T n = T(g.rows());
                    RowVector<T> s1 = dxhat.colwise().sum();
                    RowVector<T> s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                    Matrix<T> centered = (n * dxhat).rowwise() - s1;
                    centered -= (xhat.array().rowwise() * s2.array()).matrix();
                    t.grad(x) += (centered.array().rowwise() * (inv_std.array() / n)).matrix();
                  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Var weighted_row_sse(Tape<T>& t, Var pred, const Matrix<T>& target, const Vector<T>& row_weight, T factor) {
  const auto& P = t.value(pred);
  require(P.rows() == target.rows() && P.cols() == target.cols(), "weighted_row_sse: shapes differ");
  require(row_weight.size() == P.rows(), "weighted_row_sse: one weight per row required");
  Matrix<T> diff = P - target;
  const T loss = factor * row_weight.dot(diff.rowwise().squaredNorm());
  Matrix<T> out(1, 1);
  out(0, 0) = loss;
  return t.record(std::move(out), {pred}, [pred, row_weight, factor, diff = std::move(diff)](Tape<T>& t, Var self) {
    const T g = t.grad(self)(0, 0);
    t.grad(pred) += ((diff.array().colwise() * row_weight.array()) * (T(2) * factor * g)).matrix();
  });
}

template <typename T>
Var sse(Tape<T>& t, Var pred, const Matrix<T>& target, T factor) {
  const auto& P = t.value(pred);
  require(P.rows() == target.rows() && P.cols() == target.cols(), "sse: shapes differ");
  Matrix<T> diff = P - target;
  Matrix<T> out(1, 1);
  out(0, 0) = factor * diff.squaredNorm();
  return t.record(std::move(out), {pred}, [pred, factor, diff = std::move(diff)](Tape<T>& t, Var self) {
    t.grad(pred) += diff * (T(2) * factor * t.grad(self)(0, 0));
  });
}

template <typename T>
Var l1(Tape<T>& t, Var pred, const Matrix<T>& target, T factor) {
  const auto& P = t.value(pred);
  require(P.rows() == target.rows() && P.cols() == target.cols(), "l1: shapes differ");
  Matrix<T> diff = P - target;
  Matrix<T> out(1, 1);
  out(0, 0) = factor * diff.cwiseAbs().sum();
  return t.record(std::move(out), {pred}, [pred, factor, diff = std::move(diff)](Tape<T>& t, Var self) {
    const T g = factor * t.grad(self)(0, 0);
    t.grad(pred) += diff.unaryExpr([g](T v) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
  });
}

template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, const Matrix<T>& target, T factor) {
  const auto& Z = t.value(logits);
  require(Z.rows() == target.rows() && Z.cols() == target.cols(), "bce_with_logits: shapes differ");
  T total = 0;
  for (Index i = 0; i < Z.size(); ++i) {
    const T z = Z.data()[i];
    const T y = target.data()[i];
    total += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix<T> out(1, 1);
  out(0, 0) = factor * total;
  return t.record(std::move(out), {logits}, [logits, target, factor](Tape<T>& t, Var self) {
    const T g = factor * t.grad(self)(0, 0);
    const auto& Z = t.value(logits);
    Matrix<T> sig = Z.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
    t.grad(logits) += (sig - target) * g;
  });
}

#define FGMAE_INSTANTIATE(T)                                                                                  \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                                 \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                            \
  template Var add<T>(Tape<T>&, Var, Var);                                                                    \
  template Var add_row<T>(Tape<T>&, Var, Var);                                                                \
  template Var scale<T>(Tape<T>&, Var, T);                                                                    \
  template Var relu<T>(Tape<T>&, Var);                                                                        \
  template Var gelu<T>(Tape<T>&, Var);                                                                        \
  template Var sigmoid<T>(Tape<T>&, Var);                                                                     \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                                     \
  template Var gather_rows<T>(Tape<T>&, Var, std::vector<Index>);                                             \
  template Var concat_rows<T>(Tape<T>&, Var, Var);                                                            \
  template Var concat_cols<T>(Tape<T>&, Var, Var);                                                            \
  template Var attention_probs<T>(Tape<T>&, Var, int, int, int);                                              \
  template Var attention_apply<T>(Tape<T>&, Var, Var, int, int, int);                                         \
  template Var class_attention<T>(Tape<T>&, Var, int, int, int);                                              \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, FeatureShape, int, int, int);                               \
  template Var conv_transpose2d<T>(Tape<T>&, Var, Var, Var, FeatureShape, int, int, int);                     \
  template Var max_pool2<T>(Tape<T>&, Var, FeatureShape);                                                     \
  template Var upsample2<T>(Tape<T>&, Var, FeatureShape);                                                     \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, Matrix<T>&, Matrix<T>&, bool, T, T);                    \
  template Var weighted_row_sse<T>(Tape<T>&, Var, const Matrix<T>&, const Vector<T>&, T);                     \
  template Var sse<T>(Tape<T>&, Var, const Matrix<T>&, T);                                                    \
  template Var l1<T>(Tape<T>&, Var, const Matrix<T>&, T);                                                     \
  template Var bce_with_logits<T>(Tape<T>&, Var, const Matrix<T>&, T);

FGMAE_INSTANTIATE(float)
FGMAE_INSTANTIATE(double)

#undef FGMAE_INSTANTIATE

}  // namespace fgmae
