#include "fgmae/optim.hpp"

#include <cmath>
#include <numbers>

namespace fgmae {

double lr_at(long step, const Schedule& s) {
  if (s.warmup < 0 || s.warmup >= s.total) throw InvalidParam("schedule needs 0 <= warmup < total");
  if (step < 0 || step > s.total) throw InvalidParam("lr_at: step outside [0, total]");
  if (step < s.warmup) return s.base_lr * double(step) / double(s.warmup);
  const double progress = double(step - s.warmup) / double(s.total - s.warmup);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void AdamW<T>::step(const std::vector<Parameter<T>*>& params, double lr) {
  for (const auto* p : params)
    if (p->grad.size() != 0 && !p->grad.allFinite()) throw NonFiniteGradient("gradient of " + p->name);
  const T b1 = T(config_.beta1), b2 = T(config_.beta2);
  for (auto* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() == 0) p->zero_grad();
    auto& s = slots_[p->name];
    if (s.m.size() == 0) {
      s.m = Matrix<T>::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix<T>::Zero(p->value.rows(), p->value.cols());
    }
    if (s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols())
      throw InvalidShape("optimizer moments do not match parameter " + p->name);
    ++s.t;
    s.m = b1 * s.m + (T(1) - b1) * p->grad;
    s.v = b2 * s.v + (T(1) - b2) * p->grad.cwiseAbs2();
    const T c1 = T(1) - T(std::pow(config_.beta1, double(s.t)));
    const T c2 = T(1) - T(std::pow(config_.beta2, double(s.t)));
    if (p->decay && config_.weight_decay > 0.0) p->value *= T(1.0 - lr * config_.weight_decay);
    p->value.array() -= T(lr) * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + T(config_.eps));
  }
  ++steps_;
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace fgmae
