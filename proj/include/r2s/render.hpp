#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/image.hpp"
#include "r2s/rng.hpp"
#include "r2s/sim_types.hpp"

namespace r2s {

// Overhead weak-perspective camera. The image spans kViewMm millimetres, so
// the 20 mm spawn disc fills half the frame.
inline constexpr float kViewMm = 40.0f;
inline constexpr float kCaseHalfMm = 15.0f;
inline constexpr float kShellBandMm = 0.6f;
inline constexpr float kPerspectiveGain = 0.25f;

inline float pixels_per_mm(int size) { return static_cast<float>(size) / kViewMm; }

// Fixed sim palette (tasks 1-2 and the un-randomized parts of 3-7).
inline constexpr Color kSimBackground{0.58f, 0.60f, 0.63f};
inline constexpr Color kSimCase{0.42f, 0.45f, 0.50f};
inline constexpr Color kHoleColor{0.06f, 0.06f, 0.07f};
inline constexpr Color kSimBolt{0.75f, 0.62f, 0.28f};
inline constexpr Color kShellColor{0.85f, 0.45f, 0.10f};

namespace detail {

inline float lattice_hash(std::uint64_t seed, int ix, int iy) {
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) ^
                    static_cast<std::uint64_t>(static_cast<std::uint32_t>(iy));
  h = splitmix64(h);
  return static_cast<float>(h >> 11) * 0x1.0p-53f;
}

// Two-octave bilinear value noise in [0,1], resolution independent.
inline float value_noise(std::uint64_t seed, float u, float v) {
  float total = 0.0f;
  float amp = 0.7f;
  float freq = 8.0f;
  for (int octave = 0; octave < 2; ++octave) {
    const float x = u * freq;
    const float y = v * freq;
    const int ix = static_cast<int>(std::floor(x));
    const int iy = static_cast<int>(std::floor(y));
    const float fx = x - static_cast<float>(ix);
    const float fy = y - static_cast<float>(iy);
    const float n00 = lattice_hash(seed + octave, ix, iy);
    const float n10 = lattice_hash(seed + octave, ix + 1, iy);
    const float n01 = lattice_hash(seed + octave, ix, iy + 1);
    const float n11 = lattice_hash(seed + octave, ix + 1, iy + 1);
    const float nx0 = n00 + (n10 - n00) * fx;
    const float nx1 = n01 + (n11 - n01) * fx;
    total += amp * (nx0 + (nx1 - nx0) * fy);
    amp = 0.3f;
    freq = 16.0f;
  }
  return total;
}

}  // namespace detail

// Screen-space bolt disc: position encodes bolt_xy, radius encodes height.
struct BoltDisc {
  float cx, cy, radius;  // pixels
};

inline BoltDisc bolt_disc(const WorldState& state, const EnvConfig& cfg, int size) {
  const float ppm = pixels_per_mm(size);
  const float half = static_cast<float>(size) / 2.0f;
  BoltDisc d;
  d.cx = half + state.bolt_xy.x * ppm;
  d.cy = half + state.bolt_xy.y * ppm;
  const float r0 = cfg.bolt_diameter / 2.0f * ppm;
  d.radius = r0 * (1.0f + kPerspectiveGain * state.bolt_z / cfg.start_height);
  return d;
}

inline float hole_radius_px(const EnvConfig& cfg, int size) { return cfg.hole_diameter / 2.0f * pixels_per_mm(size); }

inline void check_size(int size) {
  if (size != 64 && size != 128) throw ConfigError("unsupported render size: " + std::to_string(size));
}

// Sim-domain observation: flat background (optionally textured), case plate,
// hole disc, protective shell on task 1, bolt disc, linear light field.
inline Image render_sim(const WorldState& state, const RandomizationDraw& draw, const EnvConfig& cfg, int size) {
  check_size(size);
  Image img(size, size, Domain::kSim);
  const float ppm = pixels_per_mm(size);
  const float half = static_cast<float>(size) / 2.0f;
  const BoltDisc bolt = bolt_disc(state, cfg, size);
  const float hole_r = hole_radius_px(cfg, size);
  const float case_half_px = kCaseHalfMm * ppm;
  const float shell_px = cfg.task1_half_width * ppm;
  const float shell_band_px = kShellBandMm * ppm;
  const bool flat_light = draw.light_gain == 1.0f && draw.light_direction.x == 0.0f && draw.light_direction.y == 0.0f;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float px = static_cast<float>(x) + 0.5f;
      const float py = static_cast<float>(y) + 0.5f;
      const float dx = px - half;
      const float dy = py - half;
      Color c = draw.background_color;
      if (draw.texture_amplitude > 0.0f) {
        const float n = (detail::value_noise(draw.background_texture_seed, px / size, py / size) - 0.5f) * 2.0f;
        const float t = n * draw.texture_amplitude;
        c.r += t;
        c.g += t;
        c.b += t;
      }
      const bool in_case = std::abs(dx) <= case_half_px && std::abs(dy) <= case_half_px;
      if (in_case) c = draw.case_color;
      if (dx * dx + dy * dy <= hole_r * hole_r) c = kHoleColor;
      if (state.task_id == 1) {
        const float box = std::max(std::abs(dx), std::abs(dy));
        if (std::abs(box - shell_px) <= shell_band_px) c = kShellColor;
      }
      const float bx = px - bolt.cx;
      const float by = py - bolt.cy;
      const float bd2 = bx * bx + by * by;
      if (bd2 <= (bolt.radius + 1.0f) * (bolt.radius + 1.0f)) {
        // sub-pixel edge coverage keeps lateral offset observable below 1 px
        const float cover = std::min(1.0f, std::max(0.0f, bolt.radius + 0.5f - std::sqrt(bd2)));
        c.r += cover * (draw.bolt_color.r - c.r);
        c.g += cover * (draw.bolt_color.g - c.g);
        c.b += cover * (draw.bolt_color.b - c.b);
      }
      if (!flat_light) {
        const float ux = dx / static_cast<float>(size);
        const float uy = dy / static_cast<float>(size);
        const float shade = draw.light_gain * (1.0f + 0.3f * (ux * draw.light_direction.x + uy * draw.light_direction.y));
        c.r *= shade;
        c.g *= shade;
        c.b *= shade;
      }
      img.at(y, x, 0) = std::min(1.0f, std::max(0.0f, c.r));
      img.at(y, x, 1) = std::min(1.0f, std::max(0.0f, c.g));
      img.at(y, x, 2) = std::min(1.0f, std::max(0.0f, c.b));
    }
  }
  return img;
}

// Fixed "real-camera" style family standing in for the physical scene. Its
// palette, texture and shading sit outside the sim randomization ranges.
struct RealStyle {
  std::uint64_t texture_seed = 17;
  float texture_amplitude = 0.22f;
  Color background{0.38f, 0.30f, 0.22f};
  Color case_color{0.24f, 0.30f, 0.22f};
  Color bolt_color{0.56f, 0.52f, 0.46f};
  Color tint_mul{1.10f, 0.97f, 0.85f};
  Vec2 light_center{0.5f, 0.42f};  // normalized
  float light_strength = 0.35f;
  float vignette = 0.30f;
  int clutter_count = 1;
  std::uint64_t clutter_seed = 5;
};

// Small internal jitter of the family; this is the variety the translator
// gets to learn from.
inline RealStyle sample_real_style(Rng& rng) {
  RealStyle s;
  s.texture_seed = rng.next_u64();
  s.texture_amplitude = static_cast<float>(rng.uniform(0.16, 0.28));
  auto jitter = [&](float base, double amount) { return base + static_cast<float>(rng.uniform(-amount, amount)); };
  s.background = {jitter(s.background.r, 0.05), jitter(s.background.g, 0.05), jitter(s.background.b, 0.05)};
  s.case_color = {jitter(s.case_color.r, 0.04), jitter(s.case_color.g, 0.04), jitter(s.case_color.b, 0.04)};
  s.bolt_color = {jitter(s.bolt_color.r, 0.04), jitter(s.bolt_color.g, 0.04), jitter(s.bolt_color.b, 0.04)};
  s.tint_mul = {jitter(s.tint_mul.r, 0.03), jitter(s.tint_mul.g, 0.03), jitter(s.tint_mul.b, 0.03)};
  s.light_center = {static_cast<float>(rng.uniform(0.38, 0.62)), static_cast<float>(rng.uniform(0.32, 0.55))};
  s.light_strength = static_cast<float>(rng.uniform(0.25, 0.45));
  s.vignette = static_cast<float>(rng.uniform(0.22, 0.38));
  s.clutter_count = static_cast<int>(rng.uniform_int(0, 2));
  s.clutter_seed = rng.next_u64();
  return s;
}

inline void validate_noise(const NoiseSpec& noise, const EnvConfig& cfg, int size) {
  if (!noise.front) return;
  // The occluder may not cover the hole-centre region or the task is unsolvable.
  const float hole_r = hole_radius_px(cfg, size) / static_cast<float>(size);
  const float left = noise.occluder.center.x - noise.occluder.size.x / 2.0f;
  const float right = noise.occluder.center.x + noise.occluder.size.x / 2.0f;
  const float top = noise.occluder.center.y - noise.occluder.size.y / 2.0f;
  const float bottom = noise.occluder.center.y + noise.occluder.size.y / 2.0f;
  const float cx = std::min(std::max(0.5f, left), right);
  const float cy = std::min(std::max(0.5f, top), bottom);
  const float ddx = cx - 0.5f;
  const float ddy = cy - 0.5f;
  if (ddx * ddx + ddy * ddy <= hole_r * hole_r)
    throw InvalidNoiseError("front occluder covers the hole centre region");
}

// Synthetic-real observation: same geometry as render_sim under the real
// style, then the requested noise.
inline Image render_synthetic_real(const WorldState& state, const RealStyle& style, const NoiseSpec& noise,
                                   const EnvConfig& cfg, int size) {
  check_size(size);
  validate_noise(noise, cfg, size);
  Image img(size, size, Domain::kReal);
  const float ppm = pixels_per_mm(size);
  const float half = static_cast<float>(size) / 2.0f;
  const BoltDisc bolt = bolt_disc(state, cfg, size);
  const float hole_r = hole_radius_px(cfg, size);
  const float case_half_px = kCaseHalfMm * ppm;
  const std::uint64_t texture_seed = noise.background_swap ? noise.background_seed : style.texture_seed;

  // Clutter decals live on the background layer, never over the case plate.
  struct Decal {
    float cx, cy, hw, hh;
    Color color;
  };
  std::vector<Decal> decals;
  {
    Rng crng(style.clutter_seed);
    for (int i = 0; i < style.clutter_count; ++i) {
      Decal d;
      const bool horizontal = crng.uniform() < 0.5;
      const float u = static_cast<float>(crng.uniform(0.08, 0.92));
      const float v = static_cast<float>(crng.uniform(0.06, 0.18));
      d.cx = (horizontal ? u : (crng.uniform() < 0.5 ? v : 1.0f - v)) * size;
      d.cy = (horizontal ? (crng.uniform() < 0.5 ? v : 1.0f - v) : u) * size;
      d.hw = static_cast<float>(crng.uniform(0.03, 0.09)) * size;
      d.hh = static_cast<float>(crng.uniform(0.03, 0.09)) * size;
      d.color = {static_cast<float>(crng.uniform(0.1, 0.8)), static_cast<float>(crng.uniform(0.1, 0.8)),
                 static_cast<float>(crng.uniform(0.1, 0.8))};
      decals.push_back(d);
    }
  }

  const float occ_left = (noise.occluder.center.x - noise.occluder.size.x / 2.0f) * size;
  const float occ_right = (noise.occluder.center.x + noise.occluder.size.x / 2.0f) * size;
  const float occ_top = (noise.occluder.center.y - noise.occluder.size.y / 2.0f) * size;
  const float occ_bottom = (noise.occluder.center.y + noise.occluder.size.y / 2.0f) * size;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float px = static_cast<float>(x) + 0.5f;
      const float py = static_cast<float>(y) + 0.5f;
      const float dx = px - half;
      const float dy = py - half;
      const bool in_case = std::abs(dx) <= case_half_px && std::abs(dy) <= case_half_px;

      Color c = style.background;
      const float n = (detail::value_noise(texture_seed, px / size, py / size) - 0.5f) * 2.0f;
      c.r += n * style.texture_amplitude;
      c.g += n * style.texture_amplitude;
      c.b += n * style.texture_amplitude;
      if (!in_case) {
        for (const auto& d : decals)
          if (std::abs(px - d.cx) <= d.hw && std::abs(py - d.cy) <= d.hh) c = d.color;
      } else {
        c = style.case_color;
      }
      if (dx * dx + dy * dy <= hole_r * hole_r) c = kHoleColor;
      const float bx = px - bolt.cx;
      const float by = py - bolt.cy;
      const float bd2 = bx * bx + by * by;
      if (bd2 <= (bolt.radius + 1.0f) * (bolt.radius + 1.0f)) {
        const float cover = std::min(1.0f, std::max(0.0f, bolt.radius + 0.5f - std::sqrt(bd2)));
        c.r += cover * (style.bolt_color.r - c.r);
        c.g += cover * (style.bolt_color.g - c.g);
        c.b += cover * (style.bolt_color.b - c.b);
      }

      // Radial light, vignette, then the fixed colour bias.
      const float lx = px / size - style.light_center.x;
      const float ly = py / size - style.light_center.y;
      const float light = 1.0f + style.light_strength * (0.5f - 2.0f * (lx * lx + ly * ly));
      const float vx = px / size - 0.5f;
      const float vy = py / size - 0.5f;
      const float vig = 1.0f - style.vignette * 2.0f * (vx * vx + vy * vy);
      c.r *= light * vig * style.tint_mul.r;
      c.g *= light * vig * style.tint_mul.g;
      c.b *= light * vig * style.tint_mul.b;

      if (noise.front && px >= occ_left && px <= occ_right && py >= occ_top && py <= occ_bottom) c = noise.occluder.color;
      if (noise.light) {
        c.r = c.r * noise.light_noise.gain + noise.light_noise.tint.r;
        c.g = c.g * noise.light_noise.gain + noise.light_noise.tint.g;
        c.b = c.b * noise.light_noise.gain + noise.light_noise.tint.b;
      }
      img.at(y, x, 0) = std::min(1.0f, std::max(0.0f, c.r));
      img.at(y, x, 1) = std::min(1.0f, std::max(0.0f, c.g));
      img.at(y, x, 2) = std::min(1.0f, std::max(0.0f, c.b));
    }
  }
  return img;
}

// ---- per-task randomization ----

inline RandomizationDraw nominal_draw() {
  RandomizationDraw d;
  d.case_color = kSimCase;
  d.bolt_color = kSimBolt;
  d.background_color = kSimBackground;
  return d;
}

// Task 3 randomizes the case colour; task 4 randomizes case, bolt,
// background, light and texture over wider ranges.
inline RandomizationDraw draw_for_task(int task_id, Rng& rng) {
  RandomizationDraw d = nominal_draw();
  if (task_id == 3) {
    d.case_color = {static_cast<float>(rng.uniform(0.2, 0.8)), static_cast<float>(rng.uniform(0.2, 0.8)),
                    static_cast<float>(rng.uniform(0.2, 0.8))};
  } else if (task_id == 4) {
    d.case_color = {static_cast<float>(rng.uniform(0.15, 0.85)), static_cast<float>(rng.uniform(0.15, 0.85)),
                    static_cast<float>(rng.uniform(0.15, 0.85))};
    d.bolt_color = {static_cast<float>(rng.uniform(0.25, 0.9)), static_cast<float>(rng.uniform(0.25, 0.9)),
                    static_cast<float>(rng.uniform(0.25, 0.9))};
    d.background_color = {static_cast<float>(rng.uniform(0.35, 0.85)), static_cast<float>(rng.uniform(0.35, 0.85)),
                          static_cast<float>(rng.uniform(0.35, 0.85))};
    d.light_gain = static_cast<float>(rng.uniform(0.75, 1.25));
    const double angle = rng.uniform(0.0, 6.283185307179586);
    d.light_direction = {static_cast<float>(std::cos(angle)), static_cast<float>(std::sin(angle))};
    d.background_texture_seed = rng.next_u64();
    d.texture_amplitude = static_cast<float>(rng.uniform(0.0, 0.10));
  }
  return d;
}

// ---- unpaired dataset generation ----

struct DatasetEntry {
  std::string filename;
  Domain domain;
  std::uint64_t seed;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
};

// Random world state for translator training: any height of the descent,
// aligned when inside the hole.
inline WorldState sample_dataset_state(Rng& rng, const EnvConfig& cfg, Domain domain) {
  WorldState st;
  st.task_id = 2;
  st.bolt_z = static_cast<float>(rng.uniform(-cfg.success_depth, cfg.start_height));
  const double theta = rng.uniform(0.0, 6.283185307179586);
  float radius;
  if (st.bolt_z < 0.0f) {
    radius = static_cast<float>(cfg.center_tolerance * std::sqrt(rng.uniform()));
  } else {
    radius = static_cast<float>(cfg.spawn_radius * std::sqrt(rng.uniform()));
  }
  st.bolt_xy = {radius * static_cast<float>(std::cos(theta)), radius * static_cast<float>(std::sin(theta))};
  if (domain == Domain::kSim) {
    const int task = static_cast<int>(rng.uniform_int(2, 4));
    st.task_id = task;
    st.draw = draw_for_task(task, rng);
  }
  return st;
}

inline DatasetManifest render_dataset(Domain domain, int count, std::uint64_t seed, const std::string& out_dir,
                                      const EnvConfig& cfg = {}, int size = 64) {
  if (count < 1) throw ConfigError("dataset count must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  DatasetManifest manifest;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t item_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(item_seed);
    const WorldState st = sample_dataset_state(rng, cfg, domain);
    Image img;
    if (domain == Domain::kSim) {
      img = render_sim(st, st.draw, cfg, size);
    } else {
      const RealStyle style = sample_real_style(rng);
      img = render_synthetic_real(st, style, NoiseSpec::off(), cfg, size);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05d.ppm", domain_name(domain), i);
    write_ppm((std::filesystem::path(out_dir) / name).string(), img);
    manifest.entries.push_back({name, domain, item_seed});
  }
  std::ofstream mf(std::filesystem::path(out_dir) / "manifest.tsv", std::ios::binary);
  if (!mf) throw IoError("cannot write manifest in " + out_dir);
  for (const auto& e : manifest.entries) mf << e.filename << "\t" << domain_name(e.domain) << "\t" << e.seed << "\n";
  return manifest;
}

inline std::vector<Image> load_dataset(const std::string& dir, Domain expected) {
  const auto manifest_path = std::filesystem::path(dir) / "manifest.tsv";
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("missing manifest: " + manifest_path.string());
  std::vector<Image> images;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos) throw IoError("malformed manifest line: " + line);
    const std::string filename = line.substr(0, tab1);
    const std::string domain = line.substr(tab1 + 1, tab2 - tab1 - 1);
    if (domain != domain_name(expected))
      throw ConfigError("dataset " + dir + " holds domain '" + domain + "', expected '" + domain_name(expected) + "'");
    images.push_back(read_ppm((std::filesystem::path(dir) / filename).string(), expected));
  }
  if (images.empty()) throw ConfigError("empty dataset: " + dir);
  return images;
}

}  // namespace r2s
