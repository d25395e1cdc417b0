#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace fgmae {

// Row-major so that an (H*W) x C matrix is a channels-last image and an
// M x d matrix is a token sequence; both share the same kernels.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

// Spatial layout of a channels-last feature matrix with batch*height*width rows.
struct FeatureShape {
  int batch = 1;
  int height = 0;
  int width = 0;
  Index rows() const { return Index(batch) * height * width; }
};

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool decay = true;      // decoupled weight decay applies
  bool trainable = true;  // frozen parameters enter a tape as constants

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v, bool wd = true)
      : name(std::move(n)), value(std::move(v)), decay(wd) {
    grad = Matrix<T>::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Non-learned state that travels with a model (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Matrix<T> value;
};

template <typename To, typename From>
Parameter<To> cast_parameter(const Parameter<From>& p) {
  Parameter<To> out(p.name, p.value.template cast<To>(), p.decay);
  out.trainable = p.trainable;
  return out;
}

}  // namespace fgmae
