#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "r2s/autodiff.hpp"
#include "r2s/nn.hpp"
#include "r2s/rng.hpp"

namespace r2s {

// Central finite differences against the reverse-mode gradients on randomly
// sampled parameter entries. loss_builder must rebuild the loss from the
// current parameter values.
template <typename T>
double max_rel_grad_error(const std::function<VarT<T>()>& loss_builder, const std::vector<VarT<T>>& params,
                          int samples, Rng& rng, T eps) {
  for (auto& p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  backward(loss_builder());

  double max_rel = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int pi = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(params.size()) - 1));
    const std::int64_t ei = rng.uniform_int(0, params[static_cast<std::size_t>(pi)]->value.size() - 1);
    auto& p = params[static_cast<std::size_t>(pi)];
    const double analytic = static_cast<double>(p->grad[ei]);
    const T saved = p->value[ei];
    p->value[ei] = saved + eps;
    const double plus = static_cast<double>(loss_builder()->value[0]);
    p->value[ei] = saved - eps;
    const double minus = static_cast<double>(loss_builder()->value[0]);
    p->value[ei] = saved;
    const double fd = (plus - minus) / (2.0 * static_cast<double>(eps));
    const double mag = std::abs(analytic) + std::abs(fd);
    if (mag < 1e-10) continue;
    max_rel = std::max(max_rel, std::abs(analytic - fd) / mag);
  }
  return max_rel;
}

struct GradCheckLine {
  std::string family;
  double max_rel_err_64 = 0.0;
  double max_rel_err_32 = 0.0;
};

namespace detail {

// Random values kept away from relu/abs kinks.
template <typename T>
TensorT<T> off_kink(std::vector<int> shape, Rng& rng) {
  TensorT<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t[i] = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

template <typename T>
TensorT<T> unit_random(std::vector<int> shape, Rng& rng) {
  TensorT<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform());
  return t;
}

template <typename T>
struct Family {
  std::vector<VarT<T>> params;
  std::function<VarT<T>()> builder;
};

// Builds one named family. The rng consumption is identical for every T, so
// two instantiations from the same seed hold the same values up to the cast.
template <typename T>
Family<T> build_family(const std::string& family, Rng& rng) {
  Family<T> fam;
  auto square_mean = [](VarT<T> y) { return ad::mean_all(ad::mul(y, y)); };

  if (family == "conv2d") {
    auto x = make_param<T>(off_kink<T>({2, 3, 8, 8}, rng), "x");
    auto w = make_param<T>(off_kink<T>({4, 3, 3, 3}, rng), "w");
    auto b = make_param<T>(off_kink<T>({4}, rng), "b");
    fam.params = {x, w, b};
    fam.builder = [=] { return square_mean(ad::conv2d(x, w, b, 2, 1)); };
  } else if (family == "linear") {
    auto x = make_param<T>(off_kink<T>({3, 10}, rng), "x");
    auto w = make_param<T>(off_kink<T>({4, 10}, rng), "w");
    auto b = make_param<T>(off_kink<T>({4}, rng), "b");
    fam.params = {x, w, b};
    fam.builder = [=] { return square_mean(ad::linear(x, w, b)); };
  } else if (family == "tanh") {
    auto x = make_param<T>(off_kink<T>({40}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return square_mean(ad::tanh_(x)); };
  } else if (family == "relu") {
    auto x = make_param<T>(off_kink<T>({40}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return square_mean(ad::relu(x)); };
  } else if (family == "leaky_relu") {
    auto x = make_param<T>(off_kink<T>({40}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return square_mean(ad::leaky_relu(x, T(0.2))); };
  } else if (family == "exp") {
    auto x = make_param<T>(off_kink<T>({40}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return ad::mean_all(ad::exp_(x)); };
  } else if (family == "abs") {
    auto x = make_param<T>(off_kink<T>({40}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return ad::mean_all(ad::abs_(x)); };
  } else if (family == "residual_add") {
    auto x = make_param<T>(off_kink<T>({1, 4, 6, 6}, rng), "x");
    auto w = make_param<T>(off_kink<T>({4, 4, 3, 3}, rng), "w");
    auto b = make_param<T>(off_kink<T>({4}, rng), "b");
    fam.params = {x, w, b};
    fam.builder = [=] { return square_mean(ad::add(x, ad::conv2d(x, w, b, 1, 1))); };
  } else if (family == "upsample") {
    auto x = make_param<T>(off_kink<T>({1, 3, 5, 5}, rng), "x");
    fam.params = {x};
    fam.builder = [=] { return square_mean(ad::upsample2(x)); };
  } else if (family == "policy_net") {
    auto net = std::make_shared<PolicyNetT<T>>(16, rng.next_u64(), 4, 6, 6, 16);
    auto obs = make_param<T>(unit_random<T>({2, 3, 16, 16}, rng), "obs");
    // Zero heads have zero gradients through the trunk, so give them signal.
    for (auto& p : net->params)
      if (p->name == "pi.w" || p->name == "v.w")
        for (std::int64_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
    fam.params = net->params;
    fam.params.push_back(obs);
    fam.builder = [=] {
      auto out = net->forward(obs);
      auto l = ad::add(ad::mean_all(ad::mul(out.mean, out.mean)), ad::mean_all(ad::mul(out.value, out.value)));
      return ad::add(l, ad::scale(ad::sum_all(out.log_std), T(0.1)));
    };
  } else if (family == "generator") {
    auto net = std::make_shared<GeneratorT<T>>(4, rng.next_u64());
    auto x = make_param<T>(unit_random<T>({1, 3, 16, 16}, rng), "x");
    fam.params = net->params;
    fam.params.push_back(x);
    fam.builder = [=] { return square_mean(net->forward(x)); };
  } else if (family == "discriminator") {
    auto net = std::make_shared<DiscriminatorT<T>>(4, rng.next_u64());
    auto x = make_param<T>(unit_random<T>({2, 3, 16, 16}, rng), "x");
    fam.params = net->params;
    fam.params.push_back(x);
    fam.builder = [=] { return square_mean(net->forward(x)); };
  } else {
    throw ConfigError("unknown gradcheck family: " + family);
  }
  return fam;
}

}  // namespace detail

inline const std::vector<std::string>& gradcheck_families() {
  static const std::vector<std::string> families = {
      "conv2d", "linear", "tanh", "relu", "leaky_relu", "exp", "abs",
      "residual_add", "upsample", "policy_net", "generator", "discriminator"};
  return families;
}

// 64-bit: double analytic vs double central differences, eps 1e-5.
// 32-bit: float analytic vs the same accurate double oracle evaluated at the
// float parameter values; a large-eps float probe would only measure relu
// kink crossings and float rounding, not the gradients.
inline GradCheckLine check_family(const std::string& family, std::uint64_t seed, int samples) {
  GradCheckLine line;
  line.family = family;

  Rng rng64(mix_seed(seed, fnv1a(family)));
  auto fam64 = detail::build_family<double>(family, rng64);
  Rng rng32(mix_seed(seed, fnv1a(family)));
  auto fam32 = detail::build_family<float>(family, rng32);

  // Align the double replica onto the float values exactly.
  for (std::size_t k = 0; k < fam64.params.size(); ++k)
    for (std::int64_t i = 0; i < fam64.params[k]->value.size(); ++i)
      fam64.params[k]->value[i] = static_cast<double>(fam32.params[k]->value[i]);

  Rng pick64(mix_seed(seed, fnv1a(family) + 101));
  line.max_rel_err_64 = max_rel_grad_error<double>(fam64.builder, fam64.params, samples, pick64, 1e-5);

  // Float analytic gradients.
  for (auto& p : fam32.params) {
    p->ensure_grad();
    p->zero_grad();
  }
  backward(fam32.builder());

  // Scale of meaningful gradients, from the accurate side.
  for (auto& p : fam64.params) {
    p->ensure_grad();
    p->zero_grad();
  }
  backward(fam64.builder());
  double rms = 0.0;
  std::int64_t count = 0;
  for (auto& p : fam64.params) {
    for (std::int64_t i = 0; i < p->grad.size(); ++i) rms += p->grad[i] * p->grad[i];
    count += p->grad.size();
  }
  rms = std::sqrt(rms / static_cast<double>(count));
  const double floor = 1e-3 * rms + 1e-12;

  Rng pick32(mix_seed(seed, fnv1a(family) + 202));
  double max_rel = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int pi = static_cast<int>(pick32.uniform_int(0, static_cast<std::int64_t>(fam32.params.size()) - 1));
    const std::int64_t ei = pick32.uniform_int(0, fam32.params[static_cast<std::size_t>(pi)]->value.size() - 1);
    auto& pd = fam64.params[static_cast<std::size_t>(pi)];
    const double analytic32 = static_cast<double>(fam32.params[static_cast<std::size_t>(pi)]->grad[ei]);
    const double saved = pd->value[ei];
    pd->value[ei] = saved + 1e-5;
    const double plus = fam64.builder()->value[0];
    pd->value[ei] = saved - 1e-5;
    const double minus = fam64.builder()->value[0];
    pd->value[ei] = saved;
    const double fd = (plus - minus) / 2e-5;
    if (std::abs(analytic32) < floor && std::abs(fd) < floor) continue;  // below float resolution
    const double mag = std::abs(analytic32) + std::abs(fd);
    if (mag < 1e-12) continue;
    max_rel = std::max(max_rel, std::abs(analytic32 - fd) / mag);
  }
  line.max_rel_err_32 = max_rel;
  return line;
}

// Runs every family in both precisions. 64-bit must be below 1e-4, 32-bit
// below 1e-2.
inline std::vector<GradCheckLine> run_gradcheck(std::uint64_t seed, int samples = 40) {
  std::vector<GradCheckLine> lines;
  for (const auto& family : gradcheck_families()) {
    const int n = (family == "policy_net" || family == "generator" || family == "discriminator") ? std::max(samples, 200)
                                                                                                 : samples;
    lines.push_back(check_family(family, seed, n));
  }
  return lines;
}

inline constexpr double kGradTol64 = 1e-4;
inline constexpr double kGradTol32 = 1e-2;

}  // namespace r2s
