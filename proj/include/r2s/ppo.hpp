#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "r2s/autodiff.hpp"
#include "r2s/common.hpp"
#include "r2s/eval.hpp"
#include "r2s/nn.hpp"
#include "r2s/rng.hpp"
#include "r2s/vec_env.hpp"

namespace r2s {

struct PpoConfig {
  float clip_eps = 0.2f;
  float gamma = 0.99f;
  float gae_lambda = 0.95f;
  int epochs = 4;
  int minibatch_size = 256;
  float value_coef = 0.5f;
  float entropy_coef = 0.01f;
  int horizon = 128;  // steps per env per update
  long total_steps = 200000;
  int n_envs = 8;
  float lr = 3e-4f;
  TaskMix mix{{1}, TaskSampling::kUniformOnReset};
  EnvConfig env;

  // Optional periodic evaluation with mean actions; early_stop_success < 0
  // disables stopping.
  int eval_every_updates = 0;
  int eval_episodes = 100;
  float early_stop_success = -1.0f;

  void validate() const {
    if (!(clip_eps > 0.0f && clip_eps < 1.0f)) throw ConfigError("clip_eps must be in (0,1)");
    if (!(gamma > 0.0f && gamma <= 1.0f)) throw ConfigError("gamma must be in (0,1]");
    if (!(gae_lambda >= 0.0f && gae_lambda <= 1.0f)) throw ConfigError("gae_lambda must be in [0,1]");
    if (horizon < 1 || n_envs < 1 || epochs < 1 || minibatch_size < 1) throw ConfigError("ppo sizes must be positive");
    mix.validate();
    env.validate();
  }
};

// Trajectories indexed [time][env], flattened time-major.
struct RolloutBatch {
  int n_envs = 0;
  int horizon = 0;
  int obs_elems = 0;  // 3 * S * S
  std::vector<float> obs;        // [t][e][obs_elems]
  std::vector<float> actions;    // [t][e][2], pre-clamp samples
  std::vector<float> log_probs;  // [t][e]
  std::vector<float> rewards;    // [t][e]
  std::vector<float> values;     // [t][e]
  std::vector<std::uint8_t> dones;  // [t][e], episode ended at this step
  std::vector<float> advantages;
  std::vector<float> returns;

  int total() const { return n_envs * horizon; }
};

// Recursive generalized advantage estimation; returns = advantages + values.
// An episode that ends by the step cap rather than success is a truncation,
// not a terminal: its last transition bootstraps from the terminal
// observation's value (passed per slot in truncation_values, 0 elsewhere).
inline void compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                        const std::vector<std::uint8_t>& dones, const std::vector<float>& bootstrap_values, int horizon,
                        int n_envs, float gamma, float lambda, std::vector<float>& advantages, std::vector<float>& returns,
                        const std::vector<float>& truncation_values = {}) {
  const std::size_t total = static_cast<std::size_t>(horizon) * static_cast<std::size_t>(n_envs);
  if (rewards.size() != total || values.size() != total || dones.size() != total ||
      bootstrap_values.size() != static_cast<std::size_t>(n_envs))
    throw ShapeError("compute_gae: shape mismatch");
  if (!truncation_values.empty() && truncation_values.size() != total) throw ShapeError("compute_gae: truncation shape");
  advantages.assign(total, 0.0f);
  returns.assign(total, 0.0f);
  for (int e = 0; e < n_envs; ++e) {
    double last = 0.0;  // double recursion keeps long-horizon sums at storage precision
    for (int t = horizon - 1; t >= 0; --t) {
      const std::size_t i = static_cast<std::size_t>(t) * n_envs + e;
      const double not_done = dones[i] ? 0.0 : 1.0;
      double v_next = t == horizon - 1 ? bootstrap_values[static_cast<std::size_t>(e)]
                                       : values[i + static_cast<std::size_t>(n_envs)];
      if (dones[i]) v_next = truncation_values.empty() ? 0.0 : truncation_values[i];
      const double delta = rewards[i] + gamma * v_next - values[i];
      last = delta + gamma * lambda * not_done * last;
      advantages[i] = static_cast<float>(last);
      returns[i] = static_cast<float>(last + values[i]);
    }
  }
}

// Normalizes advantages to mean 0 / std 1 over the whole update batch.
inline void normalize_advantages(std::vector<float>& advantages) {
  double mean = 0.0;
  for (float a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (float a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double std = std::sqrt(var);
  for (auto& a : advantages) a = static_cast<float>((a - mean) / (std + 1e-8));
}

struct PpoLossStats {
  float total = 0.0f;
  float policy_loss = 0.0f;
  float value_loss = 0.0f;
  float entropy = 0.0f;
  float clip_fraction = 0.0f;
};

struct PpoLossGraph {
  Var total;
  Var policy_loss;
  Var value_loss;
  Var entropy;
  PpoLossStats stats;
};

// Builds the clipped-surrogate loss graph over the given samples. obs is
// (N,3,S,S); actions are pre-clamp; advantages are already normalized.
inline PpoLossGraph build_ppo_loss(const PolicyNetT<float>& policy, Tensor obs, const std::vector<float>& actions,
                                   const std::vector<float>& old_log_probs, const std::vector<float>& advantages,
                                   const std::vector<float>& returns, const PpoConfig& cfg) {
  const int n = obs.dim(0);
  auto out = policy.forward(make_constant(std::move(obs)));

  auto log_std_rows = ad::expand_rows(out.log_std, n);                 // (N,2)
  auto inv_sigma = ad::exp_(ad::scale(log_std_rows, -1.0f));           // (N,2)
  auto act = make_constant(Tensor({n, 2}, actions));
  auto z = ad::mul(ad::sub(act, out.mean), inv_sigma);
  auto z2 = ad::mul(z, z);
  constexpr float kLogTwoPi = 1.8378770664093454836f;
  auto per_dim = ad::sub(ad::scale(z2, -0.5f), log_std_rows);
  auto log_prob = ad::add_const(ad::row_sum(per_dim), -kLogTwoPi);     // (N)

  auto ratio = ad::exp_(ad::sub(log_prob, make_constant(Tensor({n}, old_log_probs))));
  auto adv = make_constant(Tensor({n}, advantages));
  auto surr_raw = ad::mul(ratio, adv);
  auto surr_clip = ad::mul(ad::clamp(ratio, 1.0f - cfg.clip_eps, 1.0f + cfg.clip_eps), adv);
  auto surrogate = ad::emin(surr_raw, surr_clip);
  auto policy_loss = ad::scale(ad::mean_all(surrogate), -1.0f);

  auto vdiff = ad::sub(out.value, make_constant(Tensor({n}, returns)));
  auto value_loss = ad::mean_all(ad::mul(vdiff, vdiff));

  // Diagonal-Gaussian entropy: sum log_std + D/2 * (1 + log 2 pi).
  auto entropy = ad::add_const(ad::sum_all(out.log_std), 1.0f + kLogTwoPi);

  auto total = ad::add(policy_loss, ad::scale(value_loss, cfg.value_coef));
  total = ad::add(total, ad::scale(entropy, -cfg.entropy_coef));

  PpoLossGraph graph;
  graph.total = total;
  graph.policy_loss = policy_loss;
  graph.value_loss = value_loss;
  graph.entropy = entropy;
  graph.stats.total = total->value[0];
  graph.stats.policy_loss = policy_loss->value[0];
  graph.stats.value_loss = value_loss->value[0];
  graph.stats.entropy = entropy->value[0];
  int clipped = 0;
  for (int i = 0; i < n; ++i)
    if (std::abs(ratio->value[i] - 1.0f) > cfg.clip_eps) ++clipped;
  graph.stats.clip_fraction = static_cast<float>(clipped) / static_cast<float>(n);
  if (!std::isfinite(graph.stats.total)) throw NumericFaultError("non-finite ppo loss; update aborted");
  return graph;
}

// Whole-batch loss, mostly for tests and diagnostics.
inline PpoLossGraph ppo_loss(const RolloutBatch& batch, const PolicyNetT<float>& policy, const PpoConfig& cfg) {
  const int n = batch.total();
  Tensor obs({n, 3, policy.image_size, policy.image_size}, batch.obs);
  return build_ppo_loss(policy, std::move(obs), batch.actions, batch.log_probs, batch.advantages, batch.returns, cfg);
}

// Running mean/std of returns; the value head is trained in normalized
// units so its gradients stay O(1) regardless of the reward scale, and its
// outputs are denormalized for advantage estimation.
class ReturnNormalizer {
 public:
  void update(const std::vector<float>& returns) {
    for (float r : returns) {
      count_ += 1.0;
      const double delta = r - mean_;
      mean_ += delta / count_;
      m2_ += delta * (r - mean_);
    }
  }
  double mean() const { return mean_; }
  double std() const { return count_ > 1.0 ? std::sqrt(std::max(1e-8, m2_ / count_)) : 1.0; }
  float normalize(float r) const { return static_cast<float>((r - mean()) / std()); }
  float denormalize(float v) const { return static_cast<float>(v * std() + mean()); }

 private:
  double mean_ = 0.0;
  double m2_ = 0.0;
  double count_ = 0.0;
};

struct TrainLogEntry {
  long step = 0;
  int update = 0;
  float mean_return = 0.0f;
  float success_rate = 0.0f;
  float policy_loss = 0.0f;
  float value_loss = 0.0f;
  float entropy = 0.0f;
  float clip_fraction = 0.0f;
  float eval_success = -1.0f;  // set on evaluation updates
};

struct TrainResult {
  std::shared_ptr<PolicyNetT<float>> policy;
  std::vector<TrainLogEntry> log;
  long steps_run = 0;
  bool early_stopped = false;
  std::string fault;  // non-empty if training halted on a numeric fault
};

using EnvFactory = std::function<VecEnv(std::uint64_t)>;

// Full training loop: collect with the vectorized mixed-task env, estimate
// advantages, then run clipped-surrogate updates for several epochs of
// minibatches.
inline TrainResult train_policy(const EnvFactory& make_env, const PpoConfig& cfg, std::uint64_t seed,
                                const CycleGanT<float>* gan = nullptr,
                                const std::function<void(const TrainLogEntry&)>& on_update = nullptr) {
  cfg.validate();
  TrainResult result;
  result.policy = std::make_shared<PolicyNetT<float>>(cfg.env.image_size, stream_seed(seed, "init"));
  PolicyNetT<float>& policy = *result.policy;
  Adam opt(policy.params, cfg.lr);
  VecEnv env = make_env(stream_seed(seed, "env"));
  Rng sampler(stream_seed(seed, "sampler"));
  Rng shuffler(stream_seed(seed, "shuffle"));
  ReturnNormalizer ret_norm;

  const int n = env.size();
  const int s = cfg.env.image_size;
  const int obs_elems = 3 * s * s;
  RolloutBatch batch;
  batch.n_envs = n;
  batch.horizon = cfg.horizon;
  batch.obs_elems = obs_elems;
  const std::size_t total = static_cast<std::size_t>(cfg.horizon) * n;
  batch.obs.resize(total * obs_elems);
  batch.actions.resize(total * 2);
  batch.log_probs.resize(total);
  batch.rewards.resize(total);
  batch.values.resize(total);
  batch.dones.resize(total);
  std::vector<float> truncation_values(total, 0.0f);

  std::vector<Image> current = env.observations();
  long steps = 0;
  int update = 0;

  // Rolling episode statistics over the most recent completions.
  std::vector<float> recent_returns;
  std::vector<float> recent_success;
  auto push_episode = [&](float ret, bool success) {
    recent_returns.push_back(ret);
    recent_success.push_back(success ? 1.0f : 0.0f);
    if (recent_returns.size() > 100) {
      recent_returns.erase(recent_returns.begin());
      recent_success.erase(recent_success.begin());
    }
  };

  auto forward_batch = [&](const std::vector<Image>& images) {
    Tensor obs({static_cast<int>(images.size()), 3, s, s});
    for (std::size_t i = 0; i < images.size(); ++i) {
      Tensor chw = image_to_chw(images[i]);
      std::copy(chw.data(), chw.data() + obs_elems, obs.data() + static_cast<std::int64_t>(i) * obs_elems);
    }
    return policy.forward(make_constant(std::move(obs)));
  };

  while (steps < cfg.total_steps) {
    // ---- collect ----
    std::fill(truncation_values.begin(), truncation_values.end(), 0.0f);
    for (int t = 0; t < cfg.horizon; ++t) {
      auto out = forward_batch(current);
      std::vector<Action2> actions(static_cast<std::size_t>(n));
      for (int e = 0; e < n; ++e) {
        const std::size_t i = static_cast<std::size_t>(t) * n + e;
        std::array<float, 2> mean{out.mean->value[2 * e], out.mean->value[2 * e + 1]};
        std::array<float, 2> log_std{out.log_std->value[0], out.log_std->value[1]};
        ActionSample a = sample_action(mean, log_std, sampler);
        actions[static_cast<std::size_t>(e)] = a.action;
        Tensor chw = image_to_chw(current[static_cast<std::size_t>(e)]);
        std::copy(chw.data(), chw.data() + obs_elems, batch.obs.data() + (static_cast<std::int64_t>(t) * n + e) * obs_elems);
        batch.actions[i * 2] = a.raw[0];
        batch.actions[i * 2 + 1] = a.raw[1];
        batch.log_probs[i] = a.log_prob;
        batch.values[i] = ret_norm.denormalize(out.value->value[e]);
      }
      VecStepOut sr = env.step(actions);
      std::vector<Image> truncated_obs;
      std::vector<std::size_t> truncated_slots;
      for (int e = 0; e < n; ++e) {
        const std::size_t i = static_cast<std::size_t>(t) * n + e;
        batch.rewards[i] = sr.rewards[static_cast<std::size_t>(e)];
        batch.dones[i] = sr.dones[static_cast<std::size_t>(e)];
        const auto& end = sr.infos[static_cast<std::size_t>(e)].end;
        if (end) {
          push_episode(end->episode_return, end->success);
          // step-cap endings bootstrap from the terminal frame
          if (!end->success) {
            truncated_obs.push_back(end->terminal_observation);
            truncated_slots.push_back(i);
          }
        }
      }
      if (!truncated_obs.empty()) {
        auto out = forward_batch(truncated_obs);
        for (std::size_t k = 0; k < truncated_slots.size(); ++k)
          truncation_values[truncated_slots[k]] = ret_norm.denormalize(out.value->value[static_cast<std::int64_t>(k)]);
      }
      current = std::move(sr.observations);
      steps += n;
    }

    // ---- advantages ----
    std::vector<float> bootstrap(static_cast<std::size_t>(n));
    {
      auto out = forward_batch(current);
      for (int e = 0; e < n; ++e) bootstrap[static_cast<std::size_t>(e)] = ret_norm.denormalize(out.value->value[e]);
    }
    compute_gae(batch.rewards, batch.values, batch.dones, bootstrap, cfg.horizon, n, cfg.gamma, cfg.gae_lambda,
                batch.advantages, batch.returns, truncation_values);
    normalize_advantages(batch.advantages);
    ret_norm.update(batch.returns);
    std::vector<float> value_targets(total);
    for (std::size_t i = 0; i < total; ++i) value_targets[i] = ret_norm.normalize(batch.returns[i]);

    // ---- optimize ----
    PpoLossStats agg;
    int agg_count = 0;
    std::vector<int> indices(total);
    for (std::size_t i = 0; i < total; ++i) indices[i] = static_cast<int>(i);
    try {
      for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = total; i > 1; --i) {
          const std::size_t j = static_cast<std::size_t>(shuffler.uniform_int(0, static_cast<std::int64_t>(i) - 1));
          std::swap(indices[i - 1], indices[j]);
        }
        for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(cfg.minibatch_size)) {
          const std::size_t end = std::min(total, start + static_cast<std::size_t>(cfg.minibatch_size));
          const int mb = static_cast<int>(end - start);
          Tensor obs({mb, 3, s, s});
          std::vector<float> act(static_cast<std::size_t>(mb) * 2), logp(static_cast<std::size_t>(mb));
          std::vector<float> adv(static_cast<std::size_t>(mb)), ret(static_cast<std::size_t>(mb));
          for (int r = 0; r < mb; ++r) {
            const std::size_t src = static_cast<std::size_t>(indices[start + static_cast<std::size_t>(r)]);
            std::copy(batch.obs.data() + src * obs_elems, batch.obs.data() + (src + 1) * obs_elems,
                      obs.data() + static_cast<std::int64_t>(r) * obs_elems);
            act[static_cast<std::size_t>(r) * 2] = batch.actions[src * 2];
            act[static_cast<std::size_t>(r) * 2 + 1] = batch.actions[src * 2 + 1];
            logp[static_cast<std::size_t>(r)] = batch.log_probs[src];
            adv[static_cast<std::size_t>(r)] = batch.advantages[src];
            ret[static_cast<std::size_t>(r)] = value_targets[src];
          }
          PpoLossGraph graph = build_ppo_loss(policy, std::move(obs), act, logp, adv, ret, cfg);
          opt.zero_grad();
          backward(graph.total);
          opt.step();
          agg.total += graph.stats.total;
          agg.policy_loss += graph.stats.policy_loss;
          agg.value_loss += graph.stats.value_loss;
          agg.entropy += graph.stats.entropy;
          agg.clip_fraction += graph.stats.clip_fraction;
          ++agg_count;
        }
      }
    } catch (const NumericFaultError& fault) {
      result.fault = fault.what();
    }

    ++update;
    TrainLogEntry entry;
    entry.step = steps;
    entry.update = update;
    entry.policy_loss = agg_count ? agg.policy_loss / agg_count : 0.0f;
    entry.value_loss = agg_count ? agg.value_loss / agg_count : 0.0f;
    entry.entropy = agg_count ? agg.entropy / agg_count : 0.0f;
    entry.clip_fraction = agg_count ? agg.clip_fraction / agg_count : 0.0f;
    double mr = 0.0, sr_ = 0.0;
    for (float v : recent_returns) mr += v;
    for (float v : recent_success) sr_ += v;
    entry.mean_return = recent_returns.empty() ? 0.0f : static_cast<float>(mr / recent_returns.size());
    entry.success_rate = recent_success.empty() ? 0.0f : static_cast<float>(sr_ / recent_success.size());

    if (result.fault.empty() && cfg.eval_every_updates > 0 && update % cfg.eval_every_updates == 0) {
      EvalConfig ec;
      ec.tasks = cfg.mix.tasks;
      ec.episodes_per_task = std::max(1, cfg.eval_episodes / static_cast<int>(cfg.mix.tasks.size()));
      ec.max_steps = cfg.env.t_max;
      ec.seed = mix_seed(stream_seed(seed, "eval"), static_cast<std::uint64_t>(update));
      RobustnessReport rep = run_episodes(policy, ec, cfg.env, PipelineMode::kSimDirect, gan);
      entry.eval_success = static_cast<float>(rep.success_rate);
    }
    result.log.push_back(entry);
    if (on_update) on_update(entry);

    if (!result.fault.empty()) break;
    if (cfg.early_stop_success > 0.0f && entry.eval_success >= cfg.early_stop_success) {
      result.early_stopped = true;
      break;
    }
  }
  result.steps_run = steps;
  return result;
}

inline TrainResult train_policy(const PpoConfig& cfg, std::uint64_t seed, const CycleGanT<float>* gan = nullptr,
                                const std::function<void(const TrainLogEntry&)>& on_update = nullptr) {
  return train_policy(
      [&](std::uint64_t env_seed) { return VecEnv(cfg.mix, cfg.n_envs, env_seed, cfg.env, ObsMode::kSim, NoiseSpec::off(), gan); },
      cfg, seed, gan, on_update);
}

}  // namespace r2s
