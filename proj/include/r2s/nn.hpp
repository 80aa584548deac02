#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "r2s/autodiff.hpp"
#include "r2s/checkpoint.hpp"
#include "r2s/rng.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

// Scaled-uniform (Xavier) init; output heads are zero-initialized so a fresh
// policy emits mean (0,0) and value 0.
template <typename T>
void xavier_uniform(TensorT<T>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
struct ModuleT {
  std::vector<VarT<T>> params;

  VarT<T> add_param(std::string name, TensorT<T> value) {
    auto p = make_param<T>(std::move(value), std::move(name));
    params.push_back(p);
    return p;
  }

  NamedTensors named(const std::string& prefix = {}) const {
    NamedTensors out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(prefix + p->name, p->value.template cast<float>());
    return out;
  }

  void load(const NamedTensors& tensors, const std::string& prefix = {}) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, tensor] : tensors) by_name[name] = &tensor;
    for (auto& p : params) {
      auto it = by_name.find(prefix + p->name);
      if (it == by_name.end()) throw IoError("checkpoint is missing tensor '" + prefix + p->name + "'");
      if (it->second->shape() != p->value.shape())
        throw ShapeError("checkpoint tensor '" + prefix + p->name + "' has shape " + it->second->shape_str() +
                         ", expected " + p->value.shape_str());
      p->value = it->second->template cast<T>();
    }
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p->value.size();
    return n;
  }
};

template <typename T>
struct Conv2dT {
  VarT<T> w, b;
  int stride = 1, pad = 0;

  void init(ModuleT<T>& owner, const std::string& name, int in_ch, int out_ch, int kernel, int stride_, int pad_, Rng& rng,
            bool zero = false) {
    stride = stride_;
    pad = pad_;
    TensorT<T> wt({out_ch, in_ch, kernel, kernel});
    if (!zero) xavier_uniform(wt, in_ch * kernel * kernel, out_ch * kernel * kernel, rng);
    w = owner.add_param(name + ".w", std::move(wt));
    b = owner.add_param(name + ".b", TensorT<T>({out_ch}));
  }

  VarT<T> forward(VarT<T> x) const { return ad::conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct LinearT {
  VarT<T> w, b;

  void init(ModuleT<T>& owner, const std::string& name, int in_f, int out_f, Rng& rng, bool zero = false) {
    TensorT<T> wt({out_f, in_f});
    if (!zero) xavier_uniform(wt, in_f, out_f, rng);
    w = owner.add_param(name + ".w", std::move(wt));
    b = owner.add_param(name + ".b", TensorT<T>({out_f}));
  }

  VarT<T> forward(VarT<T> x) const { return ad::linear(x, w, b); }
};

// ---- policy-value network ----
// 3 stride-2 convs (3 -> 16 -> 32 -> 32, kernel 4), 128-wide trunk, tanh
// action mean, state-independent learned log-std, scalar value head.
template <typename T>
struct PolicyNetT : ModuleT<T> {
  static constexpr int kActionDim = 2;
  static constexpr T kLogStdMin = T(-5);
  static constexpr T kLogStdMax = T(1);
  static constexpr T kLogStdInit = T(-0.5);

  int image_size = 64;
  int flat = 0;
  Conv2dT<T> conv1, conv2, conv3;
  LinearT<T> trunk, pi_head, v_head;
  VarT<T> log_std;

  PolicyNetT(int image_size_, std::uint64_t init_seed, int c1 = 16, int c2 = 32, int c3 = 32, int hidden = 128)
      : image_size(image_size_) {
    Rng rng(init_seed);
    conv1.init(*this, "conv1", 3, c1, 4, 2, 1, rng);
    conv2.init(*this, "conv2", c1, c2, 4, 2, 1, rng);
    conv3.init(*this, "conv3", c2, c3, 4, 2, 1, rng);
    const int side = image_size / 8;
    flat = c3 * side * side;
    trunk.init(*this, "trunk", flat, hidden, rng);
    pi_head.init(*this, "pi", hidden, kActionDim, rng, /*zero=*/true);
    v_head.init(*this, "v", hidden, 1, rng, /*zero=*/true);
    TensorT<T> ls({kActionDim});
    ls.fill(kLogStdInit);
    log_std = this->add_param("log_std", std::move(ls));
  }

  struct Out {
    VarT<T> mean;     // (N, 2) in (-1, 1)
    VarT<T> log_std;  // (2), clamped
    VarT<T> value;    // (N)
  };

  Out forward(VarT<T> obs) const {
    if (obs->value.rank() != 4 || obs->value.dim(1) != 3 || obs->value.dim(2) != image_size || obs->value.dim(3) != image_size)
      throw ShapeError("policy expects (N,3," + std::to_string(image_size) + "," + std::to_string(image_size) + "), got " +
                       obs->value.shape_str());
    const int n = obs->value.dim(0);
    auto h = ad::relu(conv1.forward(obs));
    h = ad::relu(conv2.forward(h));
    h = ad::relu(conv3.forward(h));
    h = ad::reshape(h, {n, flat});
    h = ad::relu(trunk.forward(h));
    Out out;
    out.mean = ad::tanh_(pi_head.forward(h));
    out.log_std = ad::clamp(log_std, kLogStdMin, kLogStdMax);
    auto v = v_head.forward(h);
    out.value = ad::reshape(v, {n});
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(path, this->named()); }

  static PolicyNetT load_file(const std::string& path) {
    const NamedTensors tensors = load_checkpoint(path);
    int flat_in = 0, c3 = 32;
    for (const auto& [name, t] : tensors) {
      if (name == "trunk.w") flat_in = t.dim(1);
      if (name == "conv3.w") c3 = t.dim(0);
    }
    if (flat_in == 0) throw IoError("not a policy checkpoint: " + path);
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(flat_in) / c3)));
    PolicyNetT net(side * 8, 0);
    net.load(tensors);
    return net;
  }
};

using PolicyNet = PolicyNetT<float>;

// ---- cycle-consistent translator networks ----
// Generator: 2 stride-2 encoder convs, 2 residual blocks, 2 nearest-upsample
// decoder convs, tanh output rescaled to [0,1].
template <typename T>
struct GeneratorT : ModuleT<T> {
  int base = 16;
  Conv2dT<T> enc1, enc2, res1a, res1b, res2a, res2b, dec1, dec2;

  GeneratorT(int base_channels, std::uint64_t init_seed) : base(base_channels) {
    Rng rng(init_seed);
    enc1.init(*this, "enc1", 3, base, 4, 2, 1, rng);
    enc2.init(*this, "enc2", base, 2 * base, 4, 2, 1, rng);
    res1a.init(*this, "res1a", 2 * base, 2 * base, 3, 1, 1, rng);
    res1b.init(*this, "res1b", 2 * base, 2 * base, 3, 1, 1, rng);
    res2a.init(*this, "res2a", 2 * base, 2 * base, 3, 1, 1, rng);
    res2b.init(*this, "res2b", 2 * base, 2 * base, 3, 1, 1, rng);
    dec1.init(*this, "dec1", 2 * base, base, 3, 1, 1, rng);
    dec2.init(*this, "dec2", base, 3, 3, 1, 1, rng);
  }

  VarT<T> forward(VarT<T> x) const {
    auto h = ad::relu(enc1.forward(x));
    h = ad::relu(enc2.forward(h));
    h = ad::add(h, res1b.forward(ad::relu(res1a.forward(h))));
    h = ad::add(h, res2b.forward(ad::relu(res2a.forward(h))));
    h = ad::relu(dec1.forward(ad::upsample2(h)));
    h = dec2.forward(ad::upsample2(h));
    return ad::add_const(ad::scale(ad::tanh_(h), T(0.5)), T(0.5));
  }
};

// Patch discriminator: 3 stride-2 convs to a grid of real/fake logits.
template <typename T>
struct DiscriminatorT : ModuleT<T> {
  int base = 16;
  Conv2dT<T> c1, c2, c3;

  DiscriminatorT(int base_channels, std::uint64_t init_seed) : base(base_channels) {
    Rng rng(init_seed);
    c1.init(*this, "c1", 3, base, 4, 2, 1, rng);
    c2.init(*this, "c2", base, 2 * base, 4, 2, 1, rng);
    c3.init(*this, "c3", 2 * base, 1, 4, 2, 1, rng);
  }

  VarT<T> forward(VarT<T> x) const {
    auto h = ad::leaky_relu(c1.forward(x), T(0.2));
    h = ad::leaky_relu(c2.forward(h), T(0.2));
    return c3.forward(h);
  }
};

// G_ab: real -> sim, G_ba: sim -> real, with matching discriminators.
template <typename T>
struct CycleGanT {
  GeneratorT<T> gab, gba;
  DiscriminatorT<T> da, db;

  CycleGanT(int base_channels, std::uint64_t init_seed)
      : gab(base_channels, mix_seed(init_seed, 1)),
        gba(base_channels, mix_seed(init_seed, 2)),
        da(base_channels, mix_seed(init_seed, 3)),
        db(base_channels, mix_seed(init_seed, 4)) {}

  void save(const std::string& path) const {
    NamedTensors all;
    for (const auto& [n, t] : gab.named("gab.")) all.emplace_back(n, t);
    for (const auto& [n, t] : gba.named("gba.")) all.emplace_back(n, t);
    for (const auto& [n, t] : da.named("da.")) all.emplace_back(n, t);
    for (const auto& [n, t] : db.named("db.")) all.emplace_back(n, t);
    save_checkpoint(path, all);
  }

  static CycleGanT load_file(const std::string& path) {
    const NamedTensors tensors = load_checkpoint(path);
    int base = 0;
    for (const auto& [name, t] : tensors)
      if (name == "gab.enc1.w") base = t.dim(0);
    if (base == 0) throw IoError("not a translator checkpoint: " + path);
    CycleGanT gan(base, 0);
    gan.gab.load(tensors, "gab.");
    gan.gba.load(tensors, "gba.");
    gan.da.load(tensors, "da.");
    gan.db.load(tensors, "db.");
    return gan;
  }
};

using CycleGan = CycleGanT<float>;

// ---- adaptive-moment optimizer ----
template <typename T>
class AdamT {
 public:
  AdamT(std::vector<VarT<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params_.size());
    for (const auto& p : params_) slots_.push_back({TensorT<T>(p->value.shape()), TensorT<T>(p->value.shape())});
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }
  long step_count() const { return t_; }

  void step() {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), static_cast<double>(t_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (p->grad.size() != p->value.size()) continue;  // unreached parameter
      auto& m = slots_[k].m;
      auto& v = slots_[k].v;
      for (std::int64_t i = 0; i < p->value.size(); ++i) {
        const T g = p->grad[i];
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * g;
        v[i] = beta2_ * v[i] + (T(1) - beta2_) * g * g;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct Slot {
    TensorT<T> m, v;
  };
  std::vector<VarT<T>> params_;
  std::vector<Slot> slots_;
  T lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace r2s
