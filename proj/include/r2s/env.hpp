#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "r2s/common.hpp"
#include "r2s/render.hpp"
#include "r2s/rng.hpp"
#include "r2s/sim_types.hpp"

namespace r2s {

enum class ObsMode { kSim, kSyntheticReal };

// Deterministic insertion environment. The bolt descends at constant v_z
// while the policy drives x/y; entry is blocked until the lateral offset is
// within the centre tolerance, and success fires at success_depth inside.
class InsertionEnv {
 public:
  explicit InsertionEnv(EnvConfig cfg = {}, ObsMode mode = ObsMode::kSim, NoiseSpec noise = {})
      : cfg_(cfg), mode_(mode), noise_(noise) {
    cfg_.validate();
    if (mode_ == ObsMode::kSyntheticReal) validate_noise(noise_, cfg_, cfg_.image_size);
  }

  const EnvConfig& config() const { return cfg_; }
  const WorldState& state() const { return state_; }
  bool done() const { return done_; }
  bool started() const { return started_; }
  ObsMode obs_mode() const { return mode_; }

  std::pair<WorldState, Image> reset(int task_id, std::uint64_t seed) {
    if (task_id < 1 || task_id > kNumTasks) throw InvalidTaskError("unknown task id: " + std::to_string(task_id));
    Rng rng(seed);
    state_ = WorldState{};
    state_.task_id = task_id;
    state_.episode_rng_seed = seed;
    state_.bolt_z = cfg_.start_height;
    if (task_id == 1) {
      state_.bolt_xy = cfg_.task1_anchor;
    } else {
      const double theta = rng.uniform(0.0, 6.283185307179586);
      const float radius = static_cast<float>(cfg_.spawn_radius * std::sqrt(rng.uniform()));
      state_.bolt_xy = {radius * static_cast<float>(std::cos(theta)), radius * static_cast<float>(std::sin(theta))};
    }
    state_.draw = draw_for_task(task_id, rng);
    style_ = sample_real_style(rng);
    done_ = false;
    started_ = true;
    return {state_, observe()};
  }

  StepResult step(const Action2& action) {
    if (!started_) throw EpisodeFinishedError("step before reset");
    if (done_) throw EpisodeFinishedError("step after episode end");

    const float prev_offset = state_.bolt_xy.norm();
    const float ax = std::clamp(action.dx, -1.0f, 1.0f) * cfg_.a_max;
    const float ay = std::clamp(action.dy, -1.0f, 1.0f) * cfg_.a_max;
    state_.bolt_xy.x += ax;
    state_.bolt_xy.y += ay;

    // Task 1 confines motion to the search-allowed square; other tasks to
    // the workspace box.
    const float box = state_.task_id == 1 ? cfg_.task1_half_width : cfg_.workspace_half_width;
    state_.bolt_xy.x = std::clamp(state_.bolt_xy.x, -box, box);
    state_.bolt_xy.y = std::clamp(state_.bolt_xy.y, -box, box);

    // Inside the hole the walls limit lateral motion to the clearance.
    if (state_.bolt_z < 0.0f) {
      const float r = state_.bolt_xy.norm();
      if (r > cfg_.center_tolerance && r > 0.0f) {
        const float s = cfg_.center_tolerance / r;
        state_.bolt_xy.x *= s;
        state_.bolt_xy.y *= s;
      }
    }

    const float offset = state_.bolt_xy.norm();
    const float next_z = state_.bolt_z - cfg_.v_z;
    if (next_z < 0.0f && offset > cfg_.center_tolerance) {
      state_.bolt_z = std::min(state_.bolt_z, 0.0f);
      state_.blocked = true;
    } else {
      state_.bolt_z = next_z;
      state_.blocked = false;
    }

    state_.step_count += 1;

    StepResult result;
    result.success = state_.bolt_z <= -cfg_.success_depth;
    result.done = result.success || state_.step_count >= cfg_.t_max;
    done_ = result.done;

    if (cfg_.reward_mode == EnvConfig::Reward::kShaped) {
      result.reward = -cfg_.distance_coef * (offset / 10.0f);
      result.reward += cfg_.potential_coef * (prev_offset - offset);
      if (state_.blocked) result.reward -= cfg_.blocked_penalty;
      if (result.success) result.reward += 1.0f;
    } else {
      result.reward = result.success ? 1.0f : 0.0f;
    }

    result.info["offset"] = offset;
    result.info["depth"] = -state_.bolt_z;
    result.info["blocked"] = state_.blocked ? 1.0f : 0.0f;
    result.observation = observe();
    return result;
  }

  // Renders the current observation in the configured domain.
  Image observe() const {
    if (mode_ == ObsMode::kSim) return render_sim(state_, state_.draw, cfg_, cfg_.image_size);
    return render_synthetic_real(state_, style_, noise_, cfg_, cfg_.image_size);
  }

  const RealStyle& real_style() const { return style_; }

 private:
  EnvConfig cfg_;
  ObsMode mode_;
  NoiseSpec noise_;
  WorldState state_;
  RealStyle style_;
  bool done_ = true;
  bool started_ = false;
};

}  // namespace r2s
