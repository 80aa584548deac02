#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/env.hpp"
#include "r2s/nn.hpp"
#include "r2s/rng.hpp"
#include "r2s/translate.hpp"

namespace r2s {

struct EpisodeEnd {
  float episode_return = 0.0f;
  int episode_steps = 0;
  bool success = false;
  Image terminal_observation;
};

struct VecInfo {
  float offset = 0.0f;
  float depth = 0.0f;
  bool blocked = false;
  std::optional<EpisodeEnd> end;  // set when the sub-env finished and auto-reset
};

struct VecStepOut {
  std::vector<Image> observations;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<VecInfo> infos;
};

// Vectorized mixed-task layer. Each sub-env owns an RNG stream derived from
// (seed, env index); finished sub-envs auto-reset with a task freshly drawn
// from the mix (task first, then episode seed). Sub-envs step in parallel and
// outputs are assembled in env-index order.
class VecEnv {
 public:
  VecEnv(TaskMix mix, int n, std::uint64_t seed, EnvConfig cfg = {}, ObsMode mode = ObsMode::kSim, NoiseSpec noise = {},
         const CycleGanT<float>* gan = nullptr)
      : mix_(std::move(mix)), gan_(gan) {
    mix_.validate();
    if (n < 1) throw ConfigError("vectorized layer needs n >= 1");
    if (mix_.needs_gan() && gan_ == nullptr)
      throw ConfigError("task mix includes generative tasks (5-7) but no trained translator was provided");
    envs_.reserve(static_cast<std::size_t>(n));
    streams_.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      envs_.emplace_back(cfg, mode, noise);
      streams_.emplace_back(mix_seed(seed, static_cast<std::uint64_t>(i)));
      rr_pos_.push_back(i % static_cast<int>(mix_.tasks.size()));
      alphas_.push_back(0.0f);
      episode_return_.push_back(0.0f);
    }
    observations_.resize(static_cast<std::size_t>(n));
    parallel_for(n, [&](std::int64_t i) { reset_env(static_cast<int>(i)); });
  }

  int size() const { return static_cast<int>(envs_.size()); }
  const std::vector<Image>& observations() const { return observations_; }
  int task_of(int i) const { return envs_[static_cast<std::size_t>(i)].state().task_id; }
  const InsertionEnv& env(int i) const { return envs_[static_cast<std::size_t>(i)]; }

  VecStepOut step(const std::vector<Action2>& actions) {
    const int n = size();
    if (static_cast<int>(actions.size()) != n)
      throw ArityError("expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
    VecStepOut out;
    out.observations.resize(static_cast<std::size_t>(n));
    out.rewards.resize(static_cast<std::size_t>(n));
    out.dones.resize(static_cast<std::size_t>(n));
    out.infos.resize(static_cast<std::size_t>(n));
    parallel_for(n, [&](std::int64_t idx) {
      const int i = static_cast<int>(idx);
      auto& env = envs_[static_cast<std::size_t>(i)];
      StepResult r = env.step(actions[static_cast<std::size_t>(i)]);
      episode_return_[static_cast<std::size_t>(i)] += r.reward;
      VecInfo& info = out.infos[static_cast<std::size_t>(i)];
      info.offset = r.info.at("offset");
      info.depth = r.info.at("depth");
      info.blocked = r.info.at("blocked") != 0.0f;
      out.rewards[static_cast<std::size_t>(i)] = r.reward;
      out.dones[static_cast<std::size_t>(i)] = r.done ? 1 : 0;
      if (r.done) {
        EpisodeEnd end;
        end.episode_return = episode_return_[static_cast<std::size_t>(i)];
        end.episode_steps = env.state().step_count;
        end.success = r.success;
        end.terminal_observation = transform(i, r.observation);
        info.end = std::move(end);
        reset_env(i);
        out.observations[static_cast<std::size_t>(i)] = observations_[static_cast<std::size_t>(i)];
      } else {
        out.observations[static_cast<std::size_t>(i)] = transform(i, r.observation);
        observations_[static_cast<std::size_t>(i)] = out.observations[static_cast<std::size_t>(i)];
      }
    });
    return out;
  }

 private:
  void reset_env(int i) {
    auto& stream = streams_[static_cast<std::size_t>(i)];
    const int task = sample_task(i);
    const std::uint64_t episode_seed = stream.next_u64();
    auto [state, obs] = envs_[static_cast<std::size_t>(i)].reset(task, episode_seed);
    alphas_[static_cast<std::size_t>(i)] = task == 7 ? task7_alpha(episode_seed) : 0.0f;
    episode_return_[static_cast<std::size_t>(i)] = 0.0f;
    observations_[static_cast<std::size_t>(i)] = transform(i, obs);
  }

  int sample_task(int i) {
    const auto& tasks = mix_.tasks;
    if (mix_.sampling == TaskSampling::kRoundRobin) {
      int& pos = rr_pos_[static_cast<std::size_t>(i)];
      const int task = tasks[static_cast<std::size_t>(pos)];
      pos = (pos + 1) % static_cast<int>(tasks.size());
      return task;
    }
    return tasks[static_cast<std::size_t>(streams_[static_cast<std::size_t>(i)].uniform_int(0, static_cast<std::int64_t>(tasks.size()) - 1))];
  }

  Image transform(int i, const Image& obs) const {
    const int task = envs_[static_cast<std::size_t>(i)].state().task_id;
    if (task < 5 || gan_ == nullptr) return obs;
    return wrap_task_observation(task, obs, *gan_, alphas_[static_cast<std::size_t>(i)]);
  }

  TaskMix mix_;
  const CycleGanT<float>* gan_;
  std::vector<InsertionEnv> envs_;
  std::vector<Rng> streams_;
  std::vector<int> rr_pos_;
  std::vector<float> alphas_;
  std::vector<float> episode_return_;
  std::vector<Image> observations_;
};

}  // namespace r2s
