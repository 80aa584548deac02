#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/env.hpp"
#include "r2s/nn.hpp"
#include "r2s/rng.hpp"
#include "r2s/translate.hpp"

namespace r2s {

struct ActionSample {
  Action2 action;            // clamped to [-1, 1]
  std::array<float, 2> raw;  // pre-clamp sample, the value the density refers to
  float log_prob = 0.0f;
};

// Diagonal-Gaussian draw; log_prob is the density of the pre-clamp sample.
inline ActionSample sample_action(const std::array<float, 2>& mean, const std::array<float, 2>& log_std, Rng& rng) {
  constexpr double kLogTwoPi = 1.8378770664093454836;
  ActionSample s;
  double logp = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double z = rng.normal();
    const double sigma = std::exp(static_cast<double>(log_std[static_cast<std::size_t>(i)]));
    const double raw = static_cast<double>(mean[static_cast<std::size_t>(i)]) + sigma * z;
    s.raw[static_cast<std::size_t>(i)] = static_cast<float>(raw);
    logp += -0.5 * z * z - static_cast<double>(log_std[static_cast<std::size_t>(i)]) - 0.5 * kLogTwoPi;
  }
  s.action = {std::clamp(s.raw[0], -1.0f, 1.0f), std::clamp(s.raw[1], -1.0f, 1.0f)};
  s.log_prob = static_cast<float>(logp);
  return s;
}

// Density of a given pre-clamp action under (mean, log_std).
inline float gaussian_log_prob(const std::array<float, 2>& raw, const std::array<float, 2>& mean,
                               const std::array<float, 2>& log_std) {
  constexpr double kLogTwoPi = 1.8378770664093454836;
  double logp = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double sigma = std::exp(static_cast<double>(log_std[static_cast<std::size_t>(i)]));
    const double z = (static_cast<double>(raw[static_cast<std::size_t>(i)]) - static_cast<double>(mean[static_cast<std::size_t>(i)])) / sigma;
    logp += -0.5 * z * z - static_cast<double>(log_std[static_cast<std::size_t>(i)]) - 0.5 * kLogTwoPi;
  }
  return static_cast<float>(logp);
}

struct PolicyEval {
  std::array<float, 2> mean;
  std::array<float, 2> log_std;
  float value = 0.0f;
};

// Single-observation forward pass (no gradients).
inline PolicyEval policy_forward(const PolicyNetT<float>& net, const Image& obs) {
  Tensor in = image_to_chw(obs).reshaped({1, 3, obs.height, obs.width});
  auto out = net.forward(make_constant(std::move(in)));
  PolicyEval e;
  e.mean = {out.mean->value[0], out.mean->value[1]};
  e.log_std = {out.log_std->value[0], out.log_std->value[1]};
  e.value = out.value->value[0];
  return e;
}

// ---- robustness metric ----

struct EpisodeRecord {
  int task = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  double episode_return = 0.0;  // accumulated in double so the metric oracle holds to 1e-9
  bool success = false;
};

struct TaskStats {
  int task = 0;
  int episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct RobustnessReport {
  std::vector<TaskStats> per_task;
  double sigma = 0.0;
  double success_rate = 0.0;
  std::vector<EpisodeRecord> records;
};

// sigma = (sum over tasks, episodes, steps of r) / (T_max * e_max); the
// denominator deliberately omits episode length.
inline double robustness_sigma(const std::vector<EpisodeRecord>& records, int t_max_tasks, int e_max) {
  std::map<int, int> per_task;
  for (const auto& rec : records) per_task[rec.task] += 1;
  if (static_cast<int>(per_task.size()) != t_max_tasks)
    throw IncompleteEvaluationError("expected " + std::to_string(t_max_tasks) + " tasks, saw " +
                                    std::to_string(per_task.size()));
  for (const auto& [task, n] : per_task)
    if (n != e_max)
      throw IncompleteEvaluationError("task " + std::to_string(task) + " has " + std::to_string(n) + " episodes, expected " +
                                      std::to_string(e_max));
  double total = 0.0;
  for (const auto& rec : records) total += static_cast<double>(rec.episode_return);
  return total / (static_cast<double>(t_max_tasks) * static_cast<double>(e_max));
}

inline RobustnessReport summarize(std::vector<EpisodeRecord> records, int t_max_tasks, int e_max) {
  RobustnessReport report;
  report.sigma = robustness_sigma(records, t_max_tasks, e_max);
  std::map<int, TaskStats> stats;
  double successes = 0.0;
  for (const auto& rec : records) {
    auto& s = stats[rec.task];
    s.task = rec.task;
    s.episodes += 1;
    s.mean_return += rec.episode_return;
    if (rec.success) s.success_rate += 1.0;
    if (rec.success) successes += 1.0;
  }
  for (auto& [task, s] : stats) {
    s.mean_return /= s.episodes;
    s.success_rate /= s.episodes;
    report.per_task.push_back(s);
  }
  report.success_rate = successes / static_cast<double>(records.size());
  report.records = std::move(records);
  return report;
}

// ---- evaluation configurations ----

enum class PipelineMode {
  kSimDirect,   // sim observations straight into the policy
  kReal2Sim,    // synthetic-real observations translated by G_ab first
  kRealDirect,  // ablation: synthetic-real observations fed in untranslated
};

struct EvalConfig {
  std::vector<int> tasks{1};
  int episodes_per_task = 100;  // e_max
  int max_steps = 120;          // t_max
  NoiseSpec noise;
  bool adaptation = true;
  std::uint64_t seed = 0;
  bool sample_actions = true;  // the inference loop samples; false = mean action
};

// One inference step of the adaptation loop: translate, then act.
inline std::pair<Action2, Image> real2sim_step(const Image& o_real, const CycleGanT<float>& gan,
                                               const PolicyNetT<float>& policy, Rng& rng, bool sample = true) {
  if (o_real.domain != Domain::kReal)
    throw PipelineOrderError("real2sim_step expects a real-domain observation; got sim");
  Image o_sim = translate_image(gan.gab, o_real, Domain::kSim);
  const PolicyEval eval = policy_forward(policy, o_sim);
  Action2 action;
  if (sample) {
    action = sample_action(eval.mean, eval.log_std, rng).action;
  } else {
    action = {eval.mean[0], eval.mean[1]};
  }
  return {action, std::move(o_sim)};
}

// Runs e_max episodes per task and merges records by (task, episode index).
inline RobustnessReport run_episodes(const PolicyNetT<float>& policy, const EvalConfig& cfg, const EnvConfig& env_cfg,
                                     PipelineMode mode, const CycleGanT<float>* gan = nullptr) {
  if (cfg.episodes_per_task < 1 || cfg.max_steps < 1) throw ConfigError("episodes_per_task and max_steps must be >= 1");
  if ((mode == PipelineMode::kReal2Sim) && gan == nullptr) throw ConfigError("real2sim evaluation needs a translator");
  TaskMix probe{cfg.tasks, TaskSampling::kUniformOnReset};
  probe.validate();
  if (mode == PipelineMode::kSimDirect && probe.needs_gan() && gan == nullptr)
    throw ConfigError("tasks 5-7 need a translator");

  const int n_tasks = static_cast<int>(cfg.tasks.size());
  const int total = n_tasks * cfg.episodes_per_task;
  std::vector<EpisodeRecord> records(static_cast<std::size_t>(total));

  parallel_for(total, [&](std::int64_t idx) {
    const int ti = static_cast<int>(idx) / cfg.episodes_per_task;
    const int ep = static_cast<int>(idx) % cfg.episodes_per_task;
    const int task = cfg.tasks[static_cast<std::size_t>(ti)];
    const std::uint64_t ep_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(idx));
    const ObsMode obs_mode = mode == PipelineMode::kSimDirect ? ObsMode::kSim : ObsMode::kSyntheticReal;
    InsertionEnv env(env_cfg, obs_mode, cfg.noise);
    auto [state, obs] = env.reset(task, ep_seed);
    const float alpha = task == 7 ? task7_alpha(ep_seed) : 0.0f;
    if (mode == PipelineMode::kSimDirect && task >= 5 && gan) obs = wrap_task_observation(task, obs, *gan, alpha);
    Rng rng(mix_seed(ep_seed, 0xACAC));
    EpisodeRecord rec;
    rec.task = task;
    rec.seed = ep_seed;
    double ret = 0.0;
    for (int t = 0; t < cfg.max_steps && !env.done(); ++t) {
      Action2 action;
      if (mode == PipelineMode::kReal2Sim) {
        action = real2sim_step(obs, *gan, policy, rng, cfg.sample_actions).first;
      } else {
        const PolicyEval ev = policy_forward(policy, obs);
        action = cfg.sample_actions ? sample_action(ev.mean, ev.log_std, rng).action : Action2{ev.mean[0], ev.mean[1]};
      }
      StepResult r = env.step(action);
      ret += static_cast<double>(r.reward);
      rec.steps += 1;
      rec.success = rec.success || r.success;
      obs = std::move(r.observation);
      if (mode == PipelineMode::kSimDirect && task >= 5 && gan && !r.done) obs = wrap_task_observation(task, obs, *gan, alpha);
    }
    rec.episode_return = ret;
    records[static_cast<std::size_t>(idx)] = rec;
  });

  return summarize(std::move(records), n_tasks, cfg.episodes_per_task);
}

// Real2Sim inference loop over synthetic-real observations.
inline RobustnessReport run_real2sim_episodes(const EvalConfig& cfg, const CycleGanT<float>& gan,
                                              const PolicyNetT<float>& policy, const EnvConfig& env_cfg) {
  return run_episodes(policy, cfg, env_cfg, cfg.adaptation ? PipelineMode::kReal2Sim : PipelineMode::kRealDirect, &gan);
}

}  // namespace r2s
