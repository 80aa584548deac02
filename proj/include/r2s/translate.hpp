#pragma once

#include "r2s/autodiff.hpp"
#include "r2s/image.hpp"
#include "r2s/nn.hpp"

namespace r2s {

// Runs one image through a generator (no gradients) and retags the domain.
inline Image translate_image(const GeneratorT<float>& g, const Image& img, Domain out_domain) {
  Tensor in = image_to_chw(img).reshaped({1, 3, img.height, img.width});
  auto out = g.forward(make_constant(std::move(in)));
  return chw_to_image(out->value.reshaped({3, img.height, img.width}), out_domain);
}

// Observation wrapping for the generative tasks:
//   task 5: sim -> synthetic real          (G_ba)
//   task 6: sim -> real -> back to sim     (G_ab . G_ba)
//   task 7: residual blend of the round trip, alpha fixed per episode
inline Image wrap_task_observation(int task_id, const Image& obs, const CycleGanT<float>& gan, float task7_alpha) {
  if (task_id == 5) return translate_image(gan.gba, obs, Domain::kReal);
  if (task_id == 6) return translate_image(gan.gab, translate_image(gan.gba, obs, Domain::kReal), Domain::kSim);
  if (task_id == 7) {
    Image round = translate_image(gan.gab, translate_image(gan.gba, obs, Domain::kReal), Domain::kSim);
    Image out = obs;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const float v = obs.data[i] + task7_alpha * (round.data[i] - obs.data[i]);
      out.data[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
  }
  return obs;
}

// Per-episode blend weight for task 7, a pure function of the episode seed.
inline float task7_alpha(std::uint64_t episode_seed) {
  Rng rng(mix_seed(episode_seed, 0x7A5));
  return static_cast<float>(rng.uniform());
}

}  // namespace r2s
