#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "r2s/autodiff.hpp"
#include "r2s/common.hpp"
#include "r2s/image.hpp"
#include "r2s/nn.hpp"
#include "r2s/render.hpp"
#include "r2s/rng.hpp"
#include "r2s/translate.hpp"

namespace r2s {

// Luminance contrast between the hole disc and the plate ring around it.
// Tracked across translation as a diagnostic for lost task-critical features;
// there is no pass/fail threshold attached.
inline double hole_region_contrast(const Image& img, const EnvConfig& cfg = {}) {
  const float hole_r = hole_radius_px(cfg, img.width);
  const float cx = static_cast<float>(img.width) / 2.0f;
  const float cy = static_cast<float>(img.height) / 2.0f;
  double disc = 0.0, ring = 0.0;
  int disc_n = 0, ring_n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float dx = static_cast<float>(x) + 0.5f - cx;
      const float dy = static_cast<float>(y) + 0.5f - cy;
      const float r = std::sqrt(dx * dx + dy * dy);
      const double lum = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
      if (r <= 0.8f * hole_r) {
        disc += lum;
        ++disc_n;
      } else if (r >= 1.2f * hole_r && r <= 1.6f * hole_r) {
        ring += lum;
        ++ring_n;
      }
    }
  if (disc_n == 0 || ring_n == 0) return 0.0;
  return ring / ring_n - disc / disc_n;
}

struct GanConfig {
  int image_size = 64;
  float lambda_cycle = 10.0f;
  float lambda_identity = 0.0f;  // off by default; the domains share geometry
  float lr = 2e-4f;
  int batch = 16;
  long iterations = 10000;
  int replay_size = 50;
  int base_channels = 16;

  // Held-out cycle reconstruction is evaluated every eval_every iterations;
  // early_stop_mae < 0 disables stopping.
  float holdout_fraction = 0.1f;
  int eval_every = 0;
  float early_stop_mae = -1.0f;

  void validate() const {
    if (!(lambda_cycle > 0.0f)) throw ConfigError("lambda_cycle must be positive");
    if (batch < 1 || iterations < 1 || replay_size < 1) throw ConfigError("gan sizes must be positive");
  }
};

// Stacks images into an (N,3,S,S) tensor.
inline Tensor stack_images(const std::vector<const Image*>& images) {
  const int n = static_cast<int>(images.size());
  const int h = images[0]->height;
  const int w = images[0]->width;
  Tensor out({n, 3, h, w});
  const std::int64_t elems = 3LL * h * w;
  for (int i = 0; i < n; ++i) {
    Tensor chw = image_to_chw(*images[static_cast<std::size_t>(i)]);
    std::copy(chw.data(), chw.data() + elems, out.data() + i * elems);
  }
  return out;
}

// Mean absolute reconstruction error of the round trip through both
// generators; the training graph variant keeps gradients.
inline Var cycle_loss_graph(Var x, const GeneratorT<float>& g_fwd, const GeneratorT<float>& g_bwd) {
  auto rec = g_bwd.forward(g_fwd.forward(x));
  return ad::mean_all(ad::abs_(ad::sub(rec, x)));
}

inline float cycle_loss(const Image& img, const GeneratorT<float>& g_fwd, const GeneratorT<float>& g_bwd) {
  Tensor in = image_to_chw(img).reshaped({1, 3, img.height, img.width});
  return cycle_loss_graph(make_constant(std::move(in)), g_fwd, g_bwd)->value[0];
}

// Least-squares adversarial pair: the discriminator drives real patches to 1
// and fakes to 0, the generator drives its fakes to 1.
struct AdversarialLosses {
  float d_loss = 0.0f;
  float g_loss = 0.0f;
};

template <typename T>
VarT<T> lsgan_push_to(VarT<T> logits, T target) {
  auto diff = ad::add_const(logits, -target);
  return ad::scale(ad::mean_all(ad::mul(diff, diff)), T(0.5));
}

inline AdversarialLosses adversarial_losses(const DiscriminatorT<float>& d, const Tensor& real_batch, const Tensor& fake_batch) {
  if (real_batch.shape() != fake_batch.shape()) throw ShapeError("adversarial_losses: batch shapes differ");
  auto d_real = d.forward(make_constant(real_batch));
  auto d_fake = d.forward(make_constant(fake_batch));
  AdversarialLosses out;
  out.d_loss = ad::add(lsgan_push_to(d_real, 1.0f), lsgan_push_to(d_fake, 0.0f))->value[0];
  out.g_loss = lsgan_push_to(d_fake, 1.0f)->value[0];
  return out;
}

// Pool of previously generated samples used for discriminator updates; each
// fresh fake is swapped against the pool with probability 1/2 once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {}

  Tensor query(const Tensor& fake, Rng& rng) {
    if (static_cast<int>(pool_.size()) < capacity_) {
      pool_.push_back(fake);
      return fake;
    }
    if (rng.uniform() < 0.5) return fake;
    const std::size_t k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool_.size()) - 1));
    Tensor out = pool_[k];
    pool_[k] = fake;
    return out;
  }

  int size() const { return static_cast<int>(pool_.size()); }

 private:
  int capacity_;
  std::vector<Tensor> pool_;
};

struct GanLogEntry {
  long iteration = 0;
  float g_adv_ab = 0.0f;
  float g_adv_ba = 0.0f;
  float cycle_a = 0.0f;
  float cycle_b = 0.0f;
  float d_a = 0.0f;
  float d_b = 0.0f;
  float holdout_mae = -1.0f;  // set on evaluation iterations
  // feature-vanishing diagnostic over the real holdout: hole contrast before
  // and after translation to the sim domain
  float contrast_real = 0.0f;
  float contrast_translated = 0.0f;
};

struct GanTrainResult {
  std::shared_ptr<CycleGanT<float>> gan;
  std::vector<GanLogEntry> log;
  long iterations_run = 0;
  bool early_stopped = false;
  float final_holdout_mae = -1.0f;
};

// Worst-channel mean absolute reconstruction error over a held-out set,
// averaged over both cycle directions.
inline float holdout_cycle_mae(const CycleGanT<float>& gan, const std::vector<Image>& holdout_a,
                               const std::vector<Image>& holdout_b) {
  double per_channel[3] = {0.0, 0.0, 0.0};
  std::int64_t count = 0;
  auto accumulate = [&](const std::vector<Image>& set, const GeneratorT<float>& fwd, const GeneratorT<float>& bwd) {
    for (const auto& img : set) {
      Tensor in = image_to_chw(img).reshaped({1, 3, img.height, img.width});
      auto rec = bwd.forward(fwd.forward(make_constant(std::move(in))));
      const std::int64_t plane = static_cast<std::int64_t>(img.height) * img.width;
      Tensor orig = image_to_chw(img);
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::int64_t p = 0; p < plane; ++p) sum += std::abs(rec->value[c * plane + p] - orig[c * plane + p]);
        per_channel[c] += sum / static_cast<double>(plane);
      }
      ++count;
    }
  };
  accumulate(holdout_a, gan.gab, gan.gba);
  accumulate(holdout_b, gan.gba, gan.gab);
  float worst = 0.0f;
  for (double c : per_channel) worst = std::max(worst, static_cast<float>(c / static_cast<double>(count)));
  return worst;
}

// Unpaired cycle-consistent training: alternating generator and
// discriminator updates, least-squares adversarial terms, both cycle
// directions, and replay buffers for the discriminators. Domain a is the
// synthetic-real style, domain b the sim style.
inline GanTrainResult train_gan(const std::vector<Image>& sim_images, const std::vector<Image>& real_images,
                                const GanConfig& cfg, std::uint64_t seed,
                                const std::function<void(const GanLogEntry&)>& on_log = nullptr) {
  cfg.validate();
  if (real_images.empty() || sim_images.empty()) throw ConfigError("both datasets must be non-empty");

  GanTrainResult result;
  result.gan = std::make_shared<CycleGanT<float>>(cfg.base_channels, stream_seed(seed, "init"));
  CycleGanT<float>& gan = *result.gan;

  std::vector<VarT<float>> g_params = gan.gab.params;
  g_params.insert(g_params.end(), gan.gba.params.begin(), gan.gba.params.end());
  Adam g_opt(g_params, cfg.lr, 0.5f);
  Adam da_opt(gan.da.params, cfg.lr, 0.5f);
  Adam db_opt(gan.db.params, cfg.lr, 0.5f);

  // Hold out a slice of each domain for the reconstruction metric.
  const auto split = [&](const std::vector<Image>& all) {
    const int hold = std::max(1, static_cast<int>(static_cast<float>(all.size()) * cfg.holdout_fraction));
    std::vector<const Image*> train;
    std::vector<Image> holdout;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (static_cast<int>(i) < hold) holdout.push_back(all[i]);
      else train.push_back(&all[i]);
    }
    if (train.empty()) train.push_back(&all.back());
    return std::make_pair(train, holdout);
  };
  auto [train_a, holdout_a] = split(real_images);
  auto [train_b, holdout_b] = split(sim_images);

  Rng batch_rng(stream_seed(seed, "gan"));
  Rng pool_rng(stream_seed(seed, "pool"));
  ReplayBuffer pool_a(cfg.replay_size), pool_b(cfg.replay_size);

  auto sample_batch = [&](const std::vector<const Image*>& set) {
    std::vector<const Image*> picked(static_cast<std::size_t>(cfg.batch));
    for (int i = 0; i < cfg.batch; ++i)
      picked[static_cast<std::size_t>(i)] = set[static_cast<std::size_t>(batch_rng.uniform_int(0, static_cast<std::int64_t>(set.size()) - 1))];
    return stack_images(picked);
  };

  for (long iter = 0; iter < cfg.iterations; ++iter) {
    Tensor batch_a = sample_batch(train_a);
    Tensor batch_b = sample_batch(train_b);
    GanLogEntry entry;
    entry.iteration = iter + 1;

    // ---- generator update ----
    Tensor fake_b_value, fake_a_value;
    {
      auto a = make_constant(batch_a);
      auto b = make_constant(batch_b);
      auto fake_b = gan.gab.forward(a);
      auto fake_a = gan.gba.forward(b);
      auto g_adv_ab = lsgan_push_to(gan.db.forward(fake_b), 1.0f);
      auto g_adv_ba = lsgan_push_to(gan.da.forward(fake_a), 1.0f);
      auto cyc_a = ad::mean_all(ad::abs_(ad::sub(gan.gba.forward(fake_b), a)));
      auto cyc_b = ad::mean_all(ad::abs_(ad::sub(gan.gab.forward(fake_a), b)));
      auto loss = ad::add(g_adv_ab, g_adv_ba);
      loss = ad::add(loss, ad::scale(ad::add(cyc_a, cyc_b), cfg.lambda_cycle));
      if (cfg.lambda_identity > 0.0f) {
        auto id_b = ad::mean_all(ad::abs_(ad::sub(gan.gab.forward(b), b)));
        auto id_a = ad::mean_all(ad::abs_(ad::sub(gan.gba.forward(a), a)));
        loss = ad::add(loss, ad::scale(ad::add(id_a, id_b), cfg.lambda_identity));
      }
      entry.g_adv_ab = g_adv_ab->value[0];
      entry.g_adv_ba = g_adv_ba->value[0];
      entry.cycle_a = cyc_a->value[0];
      entry.cycle_b = cyc_b->value[0];
      if (!std::isfinite(loss->value[0])) throw NumericFaultError("non-finite generator loss");
      g_opt.zero_grad();
      backward(loss);
      g_opt.step();
      fake_b_value = fake_b->value;
      fake_a_value = fake_a->value;
    }

    // ---- discriminator updates with pooled fakes ----
    {
      Tensor pooled_b = pool_b.query(fake_b_value, pool_rng);
      auto d_real = lsgan_push_to(gan.db.forward(make_constant(batch_b)), 1.0f);
      auto d_fake = lsgan_push_to(gan.db.forward(make_constant(pooled_b)), 0.0f);
      auto loss = ad::add(d_real, d_fake);
      entry.d_b = loss->value[0];
      db_opt.zero_grad();
      backward(loss);
      db_opt.step();
    }
    {
      Tensor pooled_a = pool_a.query(fake_a_value, pool_rng);
      auto d_real = lsgan_push_to(gan.da.forward(make_constant(batch_a)), 1.0f);
      auto d_fake = lsgan_push_to(gan.da.forward(make_constant(pooled_a)), 0.0f);
      auto loss = ad::add(d_real, d_fake);
      entry.d_a = loss->value[0];
      da_opt.zero_grad();
      backward(loss);
      da_opt.step();
    }

    result.iterations_run = iter + 1;
    const bool eval_now = cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations);
    if (eval_now) {
      entry.holdout_mae = holdout_cycle_mae(gan, holdout_a, holdout_b);
      result.final_holdout_mae = entry.holdout_mae;
      double c_real = 0.0, c_trans = 0.0;
      for (const auto& img : holdout_a) {
        c_real += hole_region_contrast(img);
        c_trans += hole_region_contrast(translate_image(gan.gab, img, Domain::kSim));
      }
      entry.contrast_real = static_cast<float>(c_real / static_cast<double>(holdout_a.size()));
      entry.contrast_translated = static_cast<float>(c_trans / static_cast<double>(holdout_a.size()));
    }
    result.log.push_back(entry);
    if (on_log) on_log(entry);
    if (eval_now && cfg.early_stop_mae > 0.0f && entry.holdout_mae >= 0.0f && entry.holdout_mae < cfg.early_stop_mae) {
      result.early_stopped = true;
      break;
    }
  }
  if (cfg.eval_every <= 0) result.final_holdout_mae = holdout_cycle_mae(gan, holdout_a, holdout_b);
  return result;
}

}  // namespace r2s
