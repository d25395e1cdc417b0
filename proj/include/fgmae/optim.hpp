#pragma once

// AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule.

#include "fgmae/errors.hpp"
#include "fgmae/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace fgmae {

struct Schedule {
  long warmup = 0;
  long total = 1;
  double base_lr = 1e-3;
  double min_lr = 0.0;
};

// step < W: base * step / W; otherwise min + (base - min) * (1 + cos(pi * (step - W) / (T - W))) / 2
double lr_at(long step, const Schedule& s);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Applies one update to every parameter in `params` from its accumulated
  // gradient. Throws NonFiniteGradient (before touching anything) when a
  // gradient contains NaN/Inf. Gradients are left as they are.
  void step(const std::vector<Parameter<T>*>& params, double lr);

  long steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Slot {
    Matrix<T> m, v;
    long t = 0;
  };
  AdamWConfig config_;
  std::map<std::string, Slot> slots_;
  long steps_ = 0;
};

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
bool all_finite(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params)
    if (!p->value.allFinite()) return false;
  return true;
}

// Gathers pointers to every parameter of one or more models.
template <typename T, typename... Models>
std::vector<Parameter<T>*> collect_parameters(Models&... models) {
  std::vector<Parameter<T>*> out;
  (models.for_each_parameter([&out](Parameter<T>& p) { out.push_back(&p); }), ...);
  return out;
}

}  // namespace fgmae
