#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/image.hpp"

namespace r2s {

struct Vec2 {
  float x = 0.0f;
  float y = 0.0f;
  float norm() const { return std::sqrt(x * x + y * y); }
};

struct Color {
  float r = 0.0f, g = 0.0f, b = 0.0f;
};

// Per-episode visual randomization.
struct RandomizationDraw {
  Color case_color;
  Color bolt_color;
  Color background_color;
  float light_gain = 1.0f;
  Vec2 light_direction;  // zero = flat lighting
  std::uint64_t background_texture_seed = 0;
  float texture_amplitude = 0.0f;
};

struct OccluderSpec {
  Vec2 center;  // normalized image coords, [0,1]
  Vec2 size;    // normalized width/height
  Color color;
};

struct LightNoiseSpec {
  float gain = 1.0f;
  Color tint;  // additive
};

// Injectable observation noise for the synthetic-real renderer.
struct NoiseSpec {
  bool background_swap = false;
  std::uint64_t background_seed = 0;
  bool front = false;
  OccluderSpec occluder;
  bool light = false;
  LightNoiseSpec light_noise;

  static NoiseSpec off() { return {}; }
};

// Hole/bolt geometry and episode dynamics. Distances in millimetres.
struct EnvConfig {
  float hole_diameter = 11.0f;
  float bolt_diameter = 10.0f;
  float center_tolerance = 0.5f;  // (hole - bolt) / 2
  float success_depth = 5.0f;
  float start_height = 30.0f;
  float v_z = 0.5f;    // descent per step
  float a_max = 1.0f;  // max lateral displacement per step
  int t_max = 120;
  enum class Reward { kSparse, kShaped } reward_mode = Reward::kShaped;
  // Shaped-reward terms: per-step distance penalty, progress-toward-centre
  // potential, per-step blocked penalty. The potential term telescopes over
  // the episode, so it leaves the optimal policy unchanged.
  float distance_coef = 0.01f;
  float potential_coef = 0.1f;
  float blocked_penalty = 0.1f;
  int image_size = 64;
  Vec2 task1_anchor{3.0f, 2.0f};
  float spawn_radius = 10.0f;        // uniform disc for tasks 2..7
  float task1_half_width = 5.0f;     // search-allowed square
  float workspace_half_width = 12.0f;

  void validate() const {
    if (!(hole_diameter > bolt_diameter)) throw ConfigError("hole_diameter must exceed bolt_diameter");
    if (std::abs(center_tolerance - (hole_diameter - bolt_diameter) / 2.0f) > 1e-5f)
      throw ConfigError("center_tolerance must equal (hole_diameter - bolt_diameter) / 2");
    if (!(success_depth <= start_height)) throw ConfigError("success_depth must not exceed start_height");
    if (static_cast<float>(t_max) < start_height / v_z) throw ConfigError("t_max too small to reach the hole plane");
    if (image_size != 64 && image_size != 128) throw ConfigError("image_size must be 64 or 128");
  }
};

struct WorldState {
  Vec2 bolt_xy;          // lateral offset of bolt axis from hole axis
  float bolt_z = 0.0f;   // tip height above hole plane; negative = inside
  bool blocked = false;  // tip resting on the surface, misaligned
  int step_count = 0;
  int task_id = 1;
  std::uint64_t episode_rng_seed = 0;
  RandomizationDraw draw;
};

// Policy action; dimensionless components in [-1, 1].
struct Action2 {
  float dx = 0.0f;
  float dy = 0.0f;
};

struct StepResult {
  Image observation;
  float reward = 0.0f;
  bool done = false;
  bool success = false;
  std::map<std::string, float> info;  // offset, depth, blocked
};

enum class TaskSampling { kUniformOnReset, kRoundRobin };

inline constexpr int kNumTasks = 7;

// Ordered task list used by the vectorized layer.
struct TaskMix {
  std::vector<int> tasks;
  TaskSampling sampling = TaskSampling::kUniformOnReset;

  void validate() const {
    if (tasks.empty()) throw ConfigError("task mix must be non-empty");
    for (int t : tasks)
      if (t < 1 || t > kNumTasks) throw ConfigError("task id out of range: " + std::to_string(t));
  }

  bool needs_gan() const {
    return std::any_of(tasks.begin(), tasks.end(), [](int t) { return t >= 5; });
  }
};

}  // namespace r2s
