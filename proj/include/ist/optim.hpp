#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ist/errors.hpp"
#include "ist/tensor.hpp"

namespace ist {

// Named collection of learnable tensors. Iteration order is insertion order,
// which fixes checkpoint layout and optimizer state identity.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, std::size_t r, std::size_t c) {
    auto t = Tensor<T>::zeros(r, c, true);
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return entries_.back().second;
  }

  // uniform in +/- sqrt(6 / (fan_in + fan_out))
  Tensor<T>& add_glorot(const std::string& name, std::size_t fan_in,
                        std::size_t fan_out, std::mt19937_64& rng) {
    auto& t = add(name, fan_in, fan_out);
    const double lim = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-lim, lim);
    for (auto& v : t.data()) v = T(dist(rng));
    return t;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const {
    return entries_;
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : entries_)
      if (!t.grad().empty())
        std::fill(t.grad().begin(), t.grad().end(), T(0));
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct DecaySchedule {
  std::uint64_t interval = 0;  // steps between decays; 0 disables
  double multiplier = 0.5;
};

// Adam with bias correction and an optional step decay on the learning rate.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, DecaySchedule decay = {}, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(T(lr)), decay_(decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0)) throw ConfigError("optimizer: learning rate must be > 0");
  }

  double learning_rate() const { return double(lr_); }
  std::uint64_t steps() const { return step_; }

  // checkpoint access
  std::vector<std::vector<T>>& moment1() { return m_; }
  std::vector<std::vector<T>>& moment2() { return v_; }
  void restore_state(std::uint64_t step, T lr) {
    step_ = step;
    lr_ = lr;
  }
  T lr_value() const { return lr_; }

  void ensure_state(const ParamStore<T>& params) {
    if (m_.empty()) {
      for (const auto& [name, t] : params.entries()) {
        m_.emplace_back(t.size(), T(0));
        v_.emplace_back(t.size(), T(0));
      }
    }
  }

  void step(ParamStore<T>& params) {
    ensure_state(params);
    for (const auto& [name, t] : params.entries())
      if (t.grad().size() != t.size())
        throw MissingGradient("optimizer_step: parameter '" + name +
                              "' has no gradient");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, double(step_));
    const double bc2 = 1.0 - std::pow(beta2_, double(step_));
    std::size_t pi = 0;
    for (auto& [name, t] : params.entries()) {
      auto& m = m_[pi];
      auto& v = v_[pi];
      ++pi;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double g = double(t.grad()[i]);
        m[i] = T(beta1_ * double(m[i]) + (1.0 - beta1_) * g);
        v[i] = T(beta2_ * double(v[i]) + (1.0 - beta2_) * g * g);
        const double mhat = double(m[i]) / bc1;
        const double vhat = double(v[i]) / bc2;
        t.data()[i] -= T(double(lr_) * mhat / (std::sqrt(vhat) + eps_));
      }
    }
    params.zero_grads();
    if (decay_.interval > 0 && step_ % decay_.interval == 0)
      lr_ = T(double(lr_) * decay_.multiplier);
  }

 private:
  T lr_;
  DecaySchedule decay_;
  double beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;  // per-parameter moment buffers
};

}  // namespace ist
