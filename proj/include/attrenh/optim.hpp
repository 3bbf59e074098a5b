#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "attrenh/layers.hpp"

namespace attrenh {

/// SGD with momentum and inverse-time decay: at step t the rate is
/// lr / (1 + decay * t), v = momentum * v - rate * g, w += v.
template <typename T>
class Sgd {
 public:
  Sgd(double lr, double decay, double momentum) : lr_(lr), decay_(decay), momentum_(momentum) {
    if (!(lr > 0) || !(decay >= 0) || !(momentum >= 0 && momentum < 1)) {
      throw ConfigError("sgd needs lr > 0, decay >= 0, momentum in [0, 1)");
    }
  }

  double current_lr() const { return lr_ / (1.0 + decay_ * static_cast<double>(steps_)); }
  std::int64_t steps() const { return steps_; }

  void step(const ParamSet<T>& set) {
    ensure(set);
    const double rate = current_lr();
    for (std::size_t k = 0; k < set.params.size(); ++k) {
      auto& p = *set.params[k];
      if (!p.trainable) continue;
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        v[i] = static_cast<T>(momentum_ * v[i] - rate * p.grad[i]);
        p.value[i] += v[i];
      }
    }
    ++steps_;
  }

  /// Slot tensors in parameter order, for checkpointing.
  std::vector<Tensor<T>>& velocity() { return velocity_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  void ensure(const ParamSet<T>& set) {
    if (velocity_.size() == set.params.size()) return;
    velocity_.clear();
    for (auto* p : set.params) velocity_.emplace_back(p->value.shape());
  }

 private:
  double lr_, decay_, momentum_;
  std::int64_t steps_ = 0;
  std::vector<Tensor<T>> velocity_;
};

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0)) {
      throw ConfigError("adam needs lr > 0, betas in [0, 1), eps > 0");
    }
  }

  std::int64_t steps() const { return steps_; }

  void step(const ParamSet<T>& set) {
    ensure(set);
    ++steps_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < set.params.size(); ++k) {
      auto& p = *set.params[k];
      if (!p.trainable) continue;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        const double mi = b1_ * m[i] + (1 - b1_) * g;
        const double vi = b2_ * v[i] + (1 - b2_) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p.value[i] -= static_cast<T>(lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
      }
    }
  }

  std::vector<Tensor<T>>& first_moment() { return m_; }
  std::vector<Tensor<T>>& second_moment() { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  void ensure(const ParamSet<T>& set) {
    if (m_.size() == set.params.size()) return;
    m_.clear();
    v_.clear();
    for (auto* p : set.params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t steps_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace attrenh
