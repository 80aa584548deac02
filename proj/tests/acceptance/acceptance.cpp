// End-to-end acceptance suite. Runs every criterion at its stated tolerance
// and prints one pass/fail line per criterion. Heavy artifacts (trained
// policies, the translator, datasets) are cached under the work directory,
// so a re-run validates the cached artifacts instead of retraining.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "r2s/cli.hpp"
#include "r2s/env.hpp"
#include "r2s/eval.hpp"
#include "r2s/gan.hpp"
#include "r2s/gradcheck.hpp"
#include "r2s/ppo.hpp"
#include "r2s/render.hpp"
#include "r2s/vec_env.hpp"

namespace fs = std::filesystem;
using namespace r2s;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double minutes_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count() / 60.0;
}

fs::path work_dir() {
  const char* env = std::getenv("R2S_ACCEPT_DIR");
  fs::path dir = env ? fs::path(env) : fs::path("acceptance_work");
  fs::create_directories(dir);
  return dir;
}

std::string format(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

// ---- cached artifacts ----

struct TrainedPolicy {
  std::shared_ptr<PolicyNet> policy;
  double train_minutes = 0.0;  // zero when loaded from cache
  long steps = 0;
  bool from_cache = false;
};

TrainedPolicy train_or_load(const std::string& tag, const PpoConfig& cfg, std::uint64_t seed) {
  TrainedPolicy out;
  const fs::path path = work_dir() / (tag + ".ckpt");
  if (fs::exists(path)) {
    out.policy = std::make_shared<PolicyNet>(PolicyNet::load_file(path.string()));
    out.from_cache = true;
    return out;
  }
  std::printf("       .. training %s (mix size %zu, cap %ld steps)\n", tag.c_str(), cfg.mix.tasks.size(), cfg.total_steps);
  std::fflush(stdout);
  const auto start = Clock::now();
  TrainResult result = train_policy(cfg, seed);
  out.train_minutes = minutes_since(start);
  out.steps = result.steps_run;
  out.policy = result.policy;
  out.policy->save(path.string());
  std::printf("       .. %s: %ld steps in %.1f min%s\n", tag.c_str(), result.steps_run, out.train_minutes,
              result.early_stopped ? " (early stop)" : "");
  std::fflush(stdout);
  return out;
}

PpoConfig convergence_config(const std::vector<int>& tasks) {
  PpoConfig cfg;
  cfg.mix.tasks = tasks;
  cfg.total_steps = 200000;
  cfg.eval_every_updates = 10;
  cfg.eval_episodes = 100;
  cfg.early_stop_success = 0.95f;
  return cfg;
}

// ---- criteria ----

void criterion_1_gradients() {
  const auto start = Clock::now();
  bool ok = true;
  double worst64 = 0.0, worst32 = 0.0;
  for (const auto& line : run_gradcheck(7, 80)) {
    worst64 = std::max(worst64, line.max_rel_err_64);
    worst32 = std::max(worst32, line.max_rel_err_32);
    ok = ok && line.max_rel_err_64 < kGradTol64 && line.max_rel_err_32 < kGradTol32;
  }
  const double mins = minutes_since(start);
  ok = ok && mins < 2.0;
  report(1, "gradient suite", ok,
         "worst rel err 64-bit " + format(worst64, 8) + " (<1e-4), 32-bit " + format(worst32, 6) + " (<1e-2), " +
             format(mins, 2) + " min (<2)");
}

void criterion_2_ppo_oracle() {
  bool ok = true;
  std::ostringstream detail;

  PolicyNetT<float> policy(16, 3, 4, 6, 6, 16);
  Rng rng(7);
  PpoConfig cfg;
  cfg.env.image_size = 16;
  auto probe = [&](float ratio, float advantage) {
    RolloutBatch b;
    b.n_envs = 1;
    b.horizon = 1;
    b.obs_elems = 3 * 16 * 16;
    b.obs.resize(static_cast<std::size_t>(b.obs_elems));
    for (auto& v : b.obs) v = static_cast<float>(rng.uniform());
    Tensor obs({1, 3, 16, 16}, b.obs);
    auto out = policy.forward(make_constant(obs));
    const std::array<float, 2> mean{out.mean->value[0], out.mean->value[1]};
    const std::array<float, 2> log_std{out.log_std->value[0], out.log_std->value[1]};
    const std::array<float, 2> raw{mean[0] + 0.1f, mean[1] - 0.2f};
    b.actions = {raw[0], raw[1]};
    b.log_probs = {gaussian_log_prob(raw, mean, log_std) - std::log(ratio)};
    b.advantages = {advantage};
    b.returns = {0.0f};
    b.rewards = {0.0f};
    b.values = {0.0f};
    b.dones = {0};
    return ppo_loss(b, policy, cfg).stats.policy_loss;
  };

  const float case1 = probe(1.5f, 1.0f);
  ok = ok && std::abs(case1 - (-1.2f)) < 1e-6f;
  const float case2 = probe(0.5f, -1.0f);
  ok = ok && std::abs(case2 - 0.8f) < 1e-6f;
  bool unclipped_ok = true;
  for (float r : {0.8f, 0.9f, 1.0f, 1.1f, 1.2f}) {
    const float loss = probe(r, 1.0f);
    if (std::abs(loss - (-r)) >= 1e-6f) unclipped_ok = false;
  }
  ok = ok && unclipped_ok;
  detail << "clip cases " << (ok ? "exact" : "WRONG") << " to 1e-6";

  // GAE(lambda=1, gamma=1) vs the Monte Carlo oracle on 100 random episodes
  Rng grng(23);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int horizon = static_cast<int>(grng.uniform_int(2, 60));
    std::vector<float> rewards, values, bootstrap{0.0f};
    std::vector<std::uint8_t> dones;
    for (int i = 0; i < horizon; ++i) {
      rewards.push_back(static_cast<float>(grng.uniform(-1, 1)));
      values.push_back(static_cast<float>(grng.uniform(-1, 1)));
      dones.push_back(grng.uniform() < 0.1 ? 1 : 0);
    }
    dones.back() = 1;
    std::vector<float> adv, ret;
    compute_gae(rewards, values, dones, bootstrap, horizon, 1, 1.0f, 1.0f, adv, ret);
    for (int t = 0; t < horizon; ++t) {
      double mc = 0.0;
      for (int u = t; u < horizon; ++u) {
        mc += rewards[static_cast<std::size_t>(u)];
        if (dones[static_cast<std::size_t>(u)]) break;
      }
      worst = std::max(worst, std::abs(static_cast<double>(adv[static_cast<std::size_t>(t)]) -
                                       (mc - values[static_cast<std::size_t>(t)])));
    }
  }
  ok = ok && worst < 1e-6;
  detail << "; GAE vs Monte Carlo worst |diff| " << format(worst, 9) << " (<1e-6)";
  report(2, "ppo objective oracle", ok, detail.str());
}

void criterion_3_convergence() {
  bool ok = true;
  std::ostringstream detail;
  const int cores = ThreadPool::global().threads();
  for (int task : {1, 2}) {
    TrainedPolicy tp = train_or_load("policy_task" + std::to_string(task), convergence_config({task}),
                                     task == 1 ? 11 : 22);
    EvalConfig ec;
    ec.tasks = {task};
    ec.episodes_per_task = 100;
    ec.max_steps = 120;
    ec.seed = 1100 + static_cast<std::uint64_t>(task);
    RobustnessReport rep = run_episodes(*tp.policy, ec, EnvConfig{}, PipelineMode::kSimDirect);
    const double scaled_minutes = tp.train_minutes * cores / 8.0;
    const bool time_ok = tp.from_cache || scaled_minutes <= 30.0;
    ok = ok && rep.success_rate >= 0.90 && time_ok;
    detail << "task " << task << ": success " << format(rep.success_rate, 2);
    if (!tp.from_cache)
      detail << " after " << tp.steps << " steps, " << format(tp.train_minutes, 1) << " min on " << cores
             << " cores (8-core equiv " << format(scaled_minutes, 1) << " <=30)";
    else
      detail << " (cached)";
    detail << (task == 1 ? "; " : "");
  }
  report(3, "desk-scale convergence", ok, detail.str());
}

PpoConfig mixed_config() {
  PpoConfig mixed = convergence_config({1, 2, 3, 4});
  mixed.total_steps = 240000;
  mixed.early_stop_success = 0.90f;
  return mixed;
}

void criterion_4_mixing_robustness() {
  bool ok = true;
  std::ostringstream detail;
  for (int s = 0; s < 3; ++s) {
    const std::uint64_t seed = 201 + static_cast<std::uint64_t>(s);
    PpoConfig single = convergence_config({1});
    single.total_steps = 80000;
    TrainedPolicy p_single = train_or_load("policy_c4_task1_s" + std::to_string(s), single, seed);

    TrainedPolicy p_mixed = train_or_load("policy_c4_mixed_s" + std::to_string(s), mixed_config(), seed + 50);

    EvalConfig ec;
    ec.tasks = {1, 2, 3, 4};
    ec.episodes_per_task = 25;
    ec.max_steps = 120;
    ec.seed = 4000 + static_cast<std::uint64_t>(s);
    const double sigma_single = run_episodes(*p_single.policy, ec, EnvConfig{}, PipelineMode::kSimDirect).sigma;
    const double sigma_mixed = run_episodes(*p_mixed.policy, ec, EnvConfig{}, PipelineMode::kSimDirect).sigma;
    ok = ok && sigma_mixed > sigma_single;
    detail << "seed " << s << ": sigma mixed " << format(sigma_mixed, 3) << " vs task1-only " << format(sigma_single, 3)
           << (s < 2 ? "; " : "");
  }
  report(4, "mixing-robustness ordering", ok, detail.str());
}

void criterion_5_vectorization() {
  // exact equality against a sequential oracle on 1000 random cases
  Rng rng(505);
  bool exact = true;
  for (int trial = 0; trial < 1000 && exact; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 16));
    TaskMix mix;
    const int mix_len = static_cast<int>(rng.uniform_int(1, 4));
    for (int i = 0; i < mix_len; ++i) mix.tasks.push_back(static_cast<int>(rng.uniform_int(1, 4)));
    mix.sampling = rng.uniform() < 0.5 ? TaskSampling::kUniformOnReset : TaskSampling::kRoundRobin;
    const std::uint64_t seed = rng.next_u64();
    EnvConfig cfg;
    cfg.start_height = 2.0f;
    cfg.success_depth = 1.0f;

    VecEnv vec(mix, n, seed, cfg);
    // sequential oracle
    std::vector<InsertionEnv> envs;
    std::vector<Rng> streams;
    std::vector<int> rr;
    std::vector<Image> obs;
    for (int i = 0; i < n; ++i) {
      envs.emplace_back(cfg);
      streams.emplace_back(mix_seed(seed, static_cast<std::uint64_t>(i)));
      rr.push_back(i % static_cast<int>(mix.tasks.size()));
    }
    auto reset_one = [&](int i) {
      int task;
      if (mix.sampling == TaskSampling::kRoundRobin) {
        task = mix.tasks[static_cast<std::size_t>(rr[static_cast<std::size_t>(i)])];
        rr[static_cast<std::size_t>(i)] = (rr[static_cast<std::size_t>(i)] + 1) % static_cast<int>(mix.tasks.size());
      } else {
        task = mix.tasks[static_cast<std::size_t>(
            streams[static_cast<std::size_t>(i)].uniform_int(0, static_cast<std::int64_t>(mix.tasks.size()) - 1))];
      }
      return envs[static_cast<std::size_t>(i)].reset(task, streams[static_cast<std::size_t>(i)].next_u64()).second;
    };
    for (int i = 0; i < n; ++i) obs.push_back(reset_one(i));
    for (int i = 0; i < n; ++i) exact = exact && same_pixels(vec.observations()[static_cast<std::size_t>(i)], obs[static_cast<std::size_t>(i)]);

    const int steps = static_cast<int>(rng.uniform_int(3, 8));
    for (int t = 0; t < steps && exact; ++t) {
      std::vector<Action2> actions;
      for (int i = 0; i < n; ++i)
        actions.push_back({static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1))});
      VecStepOut out = vec.step(actions);
      for (int i = 0; i < n; ++i) {
        StepResult r = envs[static_cast<std::size_t>(i)].step(actions[static_cast<std::size_t>(i)]);
        const Image ref = r.done ? reset_one(i) : r.observation;
        exact = exact && out.rewards[static_cast<std::size_t>(i)] == r.reward &&
                out.dones[static_cast<std::size_t>(i)] == (r.done ? 1 : 0) &&
                same_pixels(out.observations[static_cast<std::size_t>(i)], ref);
      }
    }
  }

  // throughput report (soft): measured with 8 workers regardless of cores
  const int hw = ThreadPool::global().threads();
  ThreadPool::global().set_threads(8);
  auto throughput = [&](int n) {
    TaskMix mix{{2}, TaskSampling::kUniformOnReset};
    VecEnv vec(mix, n, 1);
    std::vector<Action2> actions(static_cast<std::size_t>(n), Action2{0.1f, 0.1f});
    const int steps = 600 / n;
    const auto start = Clock::now();
    for (int t = 0; t < steps; ++t) vec.step(actions);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    return steps * n / secs;
  };
  const double t1 = throughput(1);
  const double t8 = throughput(8);
  ThreadPool::global().set_threads(hw);
  const double ratio = t8 / t1;
  std::ostringstream detail;
  detail << "1000 random cases exactly equal sequential stepping: " << (exact ? "yes" : "NO")
         << "; throughput(8)/throughput(1) = " << format(ratio, 2) << " on " << hw
         << " cores (soft target >=4 on >=8 cores; reported, not failed)";
  report(5, "vectorization", exact, detail.str());
}

struct GanArtifacts {
  std::shared_ptr<CycleGan> gan;
  float holdout_mae = -1.0f;
  bool from_cache = false;
};

GanArtifacts build_gan() {
  GanArtifacts out;
  const fs::path sim_dir = work_dir() / "ds_sim";
  const fs::path real_dir = work_dir() / "ds_real";
  if (!fs::exists(sim_dir / "manifest.tsv")) render_dataset(Domain::kSim, 400, 61, sim_dir.string());
  if (!fs::exists(real_dir / "manifest.tsv")) render_dataset(Domain::kReal, 400, 62, real_dir.string());

  const fs::path path = work_dir() / "gan.ckpt";
  const fs::path mae_path = work_dir() / "gan_mae.txt";
  if (fs::exists(path) && fs::exists(mae_path)) {
    out.gan = std::make_shared<CycleGan>(CycleGan::load_file(path.string()));
    std::ifstream is(mae_path);
    is >> out.holdout_mae;
    out.from_cache = true;
    return out;
  }

  auto sim = load_dataset(sim_dir.string(), Domain::kSim);
  auto real = load_dataset(real_dir.string(), Domain::kReal);
  GanConfig cfg;
  cfg.iterations = 10000;
  cfg.eval_every = 250;
  cfg.early_stop_mae = 0.030f;
  std::printf("       .. training translator (up to %ld iterations, early stop at held-out MAE < %.3f)\n",
              cfg.iterations, cfg.early_stop_mae);
  std::fflush(stdout);
  const auto start = Clock::now();
  GanTrainResult result = train_gan(sim, real, cfg, 63);
  std::printf("       .. translator: %ld iterations in %.1f min, held-out MAE %.4f\n", result.iterations_run,
              minutes_since(start), result.final_holdout_mae);
  std::fflush(stdout);
  result.gan->save(path.string());
  std::ofstream os(mae_path);
  os << result.final_holdout_mae << "\n";
  out.gan = result.gan;
  out.holdout_mae = result.final_holdout_mae;
  return out;
}

void criterion_6_gan_cycle(GanArtifacts& gan) {
  bool ok = gan.holdout_mae >= 0.0f && gan.holdout_mae < 0.05f;

  // statistics shift: translated real-style images move toward sim statistics
  auto sim = load_dataset((work_dir() / "ds_sim").string(), Domain::kSim);
  auto real = load_dataset((work_dir() / "ds_real").string(), Domain::kReal);
  std::array<double, 6> sim_ref{};
  for (const auto& img : sim) {
    const auto s = channel_stats(img);
    for (std::size_t i = 0; i < 6; ++i) sim_ref[i] += s[i] / static_cast<double>(sim.size());
  }
  double before = 0.0, after = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Image& x = real[static_cast<std::size_t>(i)];
    before += stats_distance(channel_stats(x), sim_ref);
    after += stats_distance(channel_stats(translate_image(gan.gan->gab, x, Domain::kSim)), sim_ref);
  }
  const double reduction = 1.0 - after / before;
  ok = ok && after <= 0.5 * before;
  report(6, "translator cycle property", ok,
         "held-out cycle MAE " + format(gan.holdout_mae, 4) + " (<0.05); stat distance to sim reduced by " +
             format(100.0 * reduction, 1) + "% (>=50%)");
}

void criterion_7_real2sim(GanArtifacts& gan) {
  // the seed-0 mixed policy from criterion 4 (cached there on first build)
  TrainedPolicy mixed = train_or_load("policy_c4_mixed_s0", mixed_config(), 251);

  EvalConfig clean;
  clean.tasks = {2};
  clean.episodes_per_task = 100;
  clean.max_steps = 120;
  clean.seed = 71;
  clean.sample_actions = true;
  clean.adaptation = true;
  RobustnessReport adapted = run_real2sim_episodes(clean, *gan.gan, *mixed.policy, EnvConfig{});

  EvalConfig ablated = clean;
  ablated.adaptation = false;
  RobustnessReport raw = run_real2sim_episodes(ablated, *gan.gan, *mixed.policy, EnvConfig{});

  EvalConfig noisy = clean;
  noisy.noise.background_swap = true;
  noisy.noise.background_seed = 999;
  noisy.noise.front = true;
  noisy.noise.occluder = {{0.22f, 0.25f}, {0.16f, 0.16f}, {0.7f, 0.7f, 0.7f}};
  noisy.noise.light = true;
  noisy.noise.light_noise = {1.15f, {0.04f, 0.02f, -0.02f}};
  RobustnessReport noised = run_real2sim_episodes(noisy, *gan.gan, *mixed.policy, EnvConfig{});

  const bool ok = adapted.success_rate >= 0.80 && adapted.success_rate > raw.success_rate &&
                  std::abs(noised.success_rate - adapted.success_rate) <= 0.15;
  report(7, "real2sim end-to-end", ok,
         "adapted " + format(adapted.success_rate, 2) + " (>=0.80), no-adaptation ablation " +
             format(raw.success_rate, 2) + " (strictly lower), with bg+front+light noise " +
             format(noised.success_rate, 2) + " (|diff| " + format(std::abs(noised.success_rate - adapted.success_rate), 2) +
             " <=0.15)");
}

void criterion_8_determinism() {
  const fs::path base = work_dir() / "det";
  fs::remove_all(base);
  auto bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };

  bool ok = true;
  std::ostringstream detail;
  {
    for (int run : {1, 2}) {
      const int code = r2s::cli::cli_main({"train-policy", "--tasks", "1", "--steps", "10000", "--deterministic",
                                           "--seed", "81", "--out", (base / ("p" + std::to_string(run))).string()});
      ok = ok && code == 0;
    }
    const bool same_ckpt = bytes(base / "p1" / "policy.ckpt") == bytes(base / "p2" / "policy.ckpt");
    const bool same_log = bytes(base / "p1" / "train_log.jsonl") == bytes(base / "p2" / "train_log.jsonl");
    ok = ok && same_ckpt && same_log;
    detail << "train-policy 10k steps: checkpoints " << (same_ckpt ? "byte-identical" : "DIFFER") << ", logs "
           << (same_log ? "identical" : "DIFFER");
  }
  {
    const std::string sim = (work_dir() / "ds_sim").string();
    const std::string real = (work_dir() / "ds_real").string();
    for (int run : {1, 2}) {
      const int code = r2s::cli::cli_main({"train-gan", "--sim-data", sim, "--real-data", real, "--iters", "500",
                                           "--deterministic", "--seed", "82", "--out",
                                           (base / ("g" + std::to_string(run))).string()});
      ok = ok && code == 0;
    }
    const bool same = bytes(base / "g1" / "gan.ckpt") == bytes(base / "g2" / "gan.ckpt");
    ok = ok && same;
    detail << "; train-gan 500 iters: checkpoints " << (same ? "byte-identical" : "DIFFER");
  }
  ThreadPool::global().set_threads(0);
  report(8, "determinism", ok, detail.str());
}

void criterion_9_sigma_oracle() {
  Rng rng(909);
  bool ok = true;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_tasks = static_cast<int>(rng.uniform_int(1, 5));
    const int episodes = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<EpisodeRecord> records;
    double brute = 0.0;
    for (int t = 1; t <= n_tasks; ++t)
      for (int e = 0; e < episodes; ++e) {
        EpisodeRecord rec;
        rec.task = t;
        rec.steps = static_cast<int>(rng.uniform_int(1, 40));
        double ret = 0.0;
        for (int s = 0; s < rec.steps; ++s) {
          const float r = static_cast<float>(rng.uniform(-2, 2));
          ret += r;
          brute += r;
        }
        rec.episode_return = ret;
        records.push_back(rec);
      }
    const double sigma = robustness_sigma(records, n_tasks, episodes);
    const double expected = brute / (static_cast<double>(n_tasks) * episodes);
    worst = std::max(worst, std::abs(sigma - expected));
    ok = ok && std::abs(sigma - expected) < 1e-9;

    // linearity
    auto scaled = records;
    for (auto& r : scaled) r.episode_return *= 3.0;
    ok = ok && std::abs(robustness_sigma(scaled, n_tasks, episodes) - 3.0 * sigma) < 1e-9;
    // permutation invariance
    auto shuffled = records;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    ok = ok && robustness_sigma(shuffled, n_tasks, episodes) == sigma;
  }
  report(9, "robustness metric oracle", ok,
         "1000 randomized record sets, worst |sigma - brute force| " + format(worst, 12) +
             " (<1e-9); linearity and permutation invariance hold");
}

}  // namespace

int main() {
  const auto start = Clock::now();
  std::printf("acceptance suite — work dir: %s, %d hardware threads\n", work_dir().string().c_str(),
              ThreadPool::global().threads());

  criterion_1_gradients();
  criterion_2_ppo_oracle();
  criterion_3_convergence();
  criterion_4_mixing_robustness();
  criterion_5_vectorization();
  GanArtifacts gan = build_gan();
  criterion_6_gan_cycle(gan);
  criterion_7_real2sim(gan);
  criterion_8_determinism();
  criterion_9_sigma_oracle();

  std::printf("%s — %d/9 criteria passed in %.1f min\n", g_failures == 0 ? "ALL PASS" : "FAILURES", 9 - g_failures,
              minutes_since(start));
  return g_failures == 0 ? 0 : 1;
}
