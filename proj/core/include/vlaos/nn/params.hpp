#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vlaos/nn/tensor.hpp"
#include "vlaos/rng.hpp"

namespace vlaos::nn {

enum class Init { zeros, ones, gauss_scaled, gauss_fixed };

// Owns every tensor of a model: trainable weights and non-trainable buffers.
// Initialization is a pure function of (seed, tensor name), so registration
// order never changes the weights.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m, v;  // optimizer state, lazily sized
    bool trainable = true;
  };

  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  int add(const std::string& name, std::vector<int> shape, Init init, bool trainable = true,
          T gauss_std = T(0.02)) {
    Entry e;
    e.name = name;
    e.value = Tensor<T>(std::move(shape));
    e.trainable = trainable;
    Pcg32 rng(seed_ ^ hash_str(name.c_str()));
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        for (auto& x : e.value.data) x = T(1);
        break;
      case Init::gauss_scaled: {
        // fan-in scaled, suitable for weight matrices (out, in)
        T std = T(1) / std::sqrt(static_cast<T>(e.value.cols()));
        for (auto& x : e.value.data) x = static_cast<T>(rng.next_gaussian()) * std;
        break;
      }
      case Init::gauss_fixed:
        for (auto& x : e.value.data) x = static_cast<T>(rng.next_gaussian()) * gauss_std;
        break;
    }
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  Entry& entry(int pid) { return entries_[pid]; }
  const Entry& entry(int pid) const { return entries_[pid]; }
  const Tensor<T>* value_ptr(int pid) const { return &entries_[pid].value; }
  int size() const { return static_cast<int>(entries_.size()); }
  uint64_t seed() const { return seed_; }

  void zero_grads() {
    for (auto& e : entries_) {
      if (e.grad.data.empty()) {
        e.grad.shape = e.value.shape;
        e.grad.data.assign(e.value.data.size(), T(0));
      } else {
        std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
      }
    }
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.numel();
    return n;
  }

  // Digest of all trainable values; used by freeze contracts in tests.
  uint64_t checksum(const std::string& name_prefix = "") const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries_) {
      if (!name_prefix.empty() && e.name.rfind(name_prefix, 0) != 0) continue;
      h = fnv1a64(e.name.data(), e.name.size(), h);
      h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(T), h);
    }
    return h;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  uint64_t seed_;
  std::vector<Entry> entries_;
};

// AdamW with decoupled weight decay, cosine decay and global-norm clipping.
template <class T>
class AdamW {
 public:
  struct Config {
    T lr = T(3e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.95);
    T eps = T(1e-8);
    T weight_decay = T(0.01);
    T clip_norm = T(1.0);
    int warmup_steps = 100;
    int total_steps = 1000;
    T final_lr_frac = T(0.05);
  };

  explicit AdamW(Config cfg) : cfg_(cfg) {}

  T lr_at(int step) const {
    T base = cfg_.lr;
    if (step < cfg_.warmup_steps && cfg_.warmup_steps > 0)
      return base * static_cast<T>(step + 1) / static_cast<T>(cfg_.warmup_steps);
    int n = std::max(1, cfg_.total_steps - cfg_.warmup_steps);
    T p = static_cast<T>(std::min(step - cfg_.warmup_steps, n)) / static_cast<T>(n);
    T cosv = static_cast<T>(0.5 * (1.0 + std::cos(3.14159265358979323846 * p)));
    return base * (cfg_.final_lr_frac + (T(1) - cfg_.final_lr_frac) * cosv);
  }

  // Applies one update to all trainable entries whose pid passes `touch`.
  // Returns the pre-clip global gradient norm.
  template <class Touch>
  T step(ParamStore<T>& store, Touch&& touch) {
    double norm_sq = 0;
    for (int pid = 0; pid < store.size(); ++pid) {
      auto& e = store.entry(pid);
      if (!e.trainable || !touch(pid) || e.grad.data.empty()) continue;
      for (T gv : e.grad.data) norm_sq += static_cast<double>(gv) * gv;
    }
    T norm = static_cast<T>(std::sqrt(norm_sq));
    T scale = T(1);
    if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    T lr = lr_at(step_);
    T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_ + 1));
    T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_ + 1));
    for (int pid = 0; pid < store.size(); ++pid) {
      auto& e = store.entry(pid);
      if (!e.trainable || !touch(pid) || e.grad.data.empty()) continue;
      if (e.m.data.empty()) {
        e.m = Tensor<T>(e.value.shape);
        e.v = Tensor<T>(e.value.shape);
      }
      for (int64_t i = 0; i < e.value.numel(); ++i) {
        T gv = e.grad[i] * scale;
        e.m[i] = cfg_.beta1 * e.m[i] + (T(1) - cfg_.beta1) * gv;
        e.v[i] = cfg_.beta2 * e.v[i] + (T(1) - cfg_.beta2) * gv * gv;
        T mhat = e.m[i] / bc1;
        T vhat = e.v[i] / bc2;
        e.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                            cfg_.weight_decay * e.value[i]);
      }
    }
    ++step_;
    return norm;
  }

  int step_count() const { return step_; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  int step_ = 0;
};

// Versioned binary tensor archive: see README for the byte layout.
void save_archive(const ParamStore<float>& store, const std::string& path);
void load_archive(ParamStore<float>& store, const std::string& path);

}  // namespace vlaos::nn
