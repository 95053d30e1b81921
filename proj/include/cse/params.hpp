#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cse/rng.hpp"
#include "cse/tensor.hpp"

namespace cse {

/// Named parameter tensors with gradient accumulators of identical shape.
/// Layers hold indices into the set, so a ParamSet (and any model built on
/// one) copies cleanly by value.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  size_t add(std::string name, std::vector<int> shape) {
    for (const auto& e : entries_) {
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    Entry e;
    e.name = std::move(name);
    e.value = Tensor(shape);
    e.grad = Tensor(std::move(shape));
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  size_t count() const { return entries_.size(); }
  Entry& entry(size_t i) { return entries_[i]; }
  const Entry& entry(size_t i) const { return entries_[i]; }

  Tensor& value(size_t i) { return entries_[i].value; }
  const Tensor& value(size_t i) const { return entries_[i].value; }
  Tensor& grad(size_t i) { return entries_[i].grad; }
  const Tensor& grad(size_t i) const { return entries_[i].grad; }
  const std::string& name(size_t i) const { return entries_[i].name; }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  void scale_grads(double s) {
    for (auto& e : entries_) {
      for (double& g : e.grad.values()) g *= s;
    }
  }

  /// Uniform +-bound init drawn from the given stream; one bound per entry.
  void init_uniform(size_t i, double bound, Rng& rng) {
    for (double& v : entries_[i].value.values()) v = rng.uniform(-bound, bound);
  }

 private:
  std::vector<Entry> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction; moment buffers are lazily shaped to the ParamSet.
class AdamState {
 public:
  void step(ParamSet& params, const AdamConfig& cfg) {
    if (m_.empty()) {
      m_.reserve(params.count());
      v_.reserve(params.count());
      for (size_t i = 0; i < params.count(); ++i) {
        m_.emplace_back(params.value(i).shape());
        v_.emplace_back(params.value(i).shape());
      }
    }
    if (m_.size() != params.count()) throw std::invalid_argument("AdamState bound to a different ParamSet");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg.beta2, t_);
    for (size_t i = 0; i < params.count(); ++i) {
      auto& p = params.value(i).values();
      const auto& g = params.grad(i).values();
      auto& m = m_[i].values();
      auto& v = v_[i].values();
      for (size_t j = 0; j < p.size(); ++j) {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
  }

  long steps() const { return t_; }

 private:
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace cse
