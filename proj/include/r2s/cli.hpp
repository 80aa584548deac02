#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "r2s/env.hpp"
#include "r2s/eval.hpp"
#include "r2s/gan.hpp"
#include "r2s/gradcheck.hpp"
#include "r2s/ppo.hpp"
#include "r2s/render.hpp"
#include "r2s/vec_env.hpp"

namespace r2s::cli {

using nlohmann::json;

// Fully resolved configuration of a run, also what lands in run.json.
struct ParsedRun {
  std::string command;
  json values;
};

namespace detail {

// Expands `--config FILE` into `--key=value` tokens placed before the user's
// flags, so explicit flags override file values which override defaults.
inline std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
      path = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    } else {
      out.push_back(a);
    }
  }
  if (path.empty()) return out;
  if (out.empty()) throw ConfigError("--config requires a subcommand");

  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::vector<std::string> expanded;
  expanded.push_back(out[0]);  // subcommand
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    expanded.push_back("--" + key + "=" + value);
  }
  expanded.insert(expanded.end(), out.begin() + 1, out.end());
  return expanded;
}

inline std::vector<int> parse_task_list(const std::string& csv) {
  std::vector<int> tasks;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    tasks.push_back(std::stoi(item));
  }
  if (tasks.empty()) throw ConfigError("empty task list");
  return tasks;
}

inline void write_run_json(const std::string& out_dir, const ParsedRun& run) {
  std::filesystem::create_directories(out_dir);
  std::ofstream os(std::filesystem::path(out_dir) / "run.json", std::ios::binary);
  json j = run.values;
  j["command"] = run.command;
  os << j.dump(2) << "\n";
}

inline void write_report(const std::string& out_dir, const RobustnessReport& report) {
  std::filesystem::create_directories(out_dir);
  json j;
  j["sigma"] = report.sigma;
  j["success_rate"] = report.success_rate;
  j["episodes"] = report.records.size();
  j["per_task"] = json::array();
  for (const auto& t : report.per_task)
    j["per_task"].push_back({{"task", t.task}, {"episodes", t.episodes}, {"mean_return", t.mean_return},
                             {"success_rate", t.success_rate}});
  std::ofstream os(std::filesystem::path(out_dir) / "report.json", std::ios::binary);
  os << j.dump(2) << "\n";
  std::ofstream ep(std::filesystem::path(out_dir) / "episodes.jsonl", std::ios::binary);
  for (const auto& rec : report.records) {
    json r = {{"task", rec.task}, {"seed", rec.seed}, {"steps", rec.steps}, {"return", rec.episode_return},
              {"success", rec.success}};
    ep << r.dump() << "\n";
  }
}

}  // namespace detail

// Parses and optionally executes. When resolve_only is given, the command is
// resolved (values filled) but not run.
inline int cli_run(std::vector<std::string> args, ParsedRun* resolve_only = nullptr) {
  CLI::App app{"Desk-scale visual insertion: PPO training, sim/real style translation, Real2Sim evaluation"};
  app.require_subcommand(1);

  // common options shared by all subcommands
  struct Common {
    std::uint64_t seed = 0;
    std::string out = "out";
    int threads = 0;  // 0 = all cores
    bool deterministic = false;
  };

  auto add_common = [](CLI::App* cmd, Common& c) {
    cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--seed", c.seed, "root seed; all randomness derives from it");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores, 1 = fully serial)");
    cmd->add_flag("--deterministic", c.deterministic, "force single-threaded deterministic mode");
  };
  auto common_json = [](const Common& c) {
    return json{{"seed", c.seed}, {"out", c.out}, {"threads", c.threads}, {"deterministic", c.deterministic}};
  };
  auto setup_threads = [](const Common& c) {
    ThreadPool::global().set_threads(c.deterministic ? 1 : c.threads);
  };

  // ---- render-dataset ----
  Common rd_common;
  std::string rd_domain = "sim";
  int rd_count = 100;
  int rd_image_size = 64;
  auto* rd = app.add_subcommand("render-dataset", "write an unpaired PPM dataset for translator training");
  add_common(rd, rd_common);
  rd->add_option("--domain", rd_domain, "sim or real")->check(CLI::IsMember({"sim", "real"}));
  rd->add_option("--count", rd_count, "number of images")->check(CLI::PositiveNumber);
  rd->add_option("--image-size", rd_image_size, "64 or 128");

  // ---- train-gan ----
  Common tg_common;
  std::string tg_sim_data, tg_real_data;
  GanConfig tg_cfg;
  auto* tg = app.add_subcommand("train-gan", "train the cycle-consistent sim/real translator");
  add_common(tg, tg_common);
  tg->add_option("--sim-data", tg_sim_data, "directory with a sim-domain dataset")->required();
  tg->add_option("--real-data", tg_real_data, "directory with a real-domain dataset")->required();
  tg->add_option("--iters", tg_cfg.iterations, "training iterations");
  tg->add_option("--batch", tg_cfg.batch, "batch size");
  tg->add_option("--lr", tg_cfg.lr, "learning rate for all four networks");
  tg->add_option("--lambda-cycle", tg_cfg.lambda_cycle, "cycle-consistency weight");
  tg->add_option("--lambda-identity", tg_cfg.lambda_identity, "identity-mapping weight (0 = off)");
  tg->add_option("--base-channels", tg_cfg.base_channels, "generator/discriminator width");
  tg->add_option("--replay", tg_cfg.replay_size, "replay buffer capacity for discriminator updates");
  tg->add_option("--holdout", tg_cfg.holdout_fraction, "held-out fraction per domain");
  tg->add_option("--eval-every", tg_cfg.eval_every, "evaluate held-out cycle MAE every N iterations (0 = end only)");
  tg->add_option("--early-stop-mae", tg_cfg.early_stop_mae, "stop once held-out MAE drops below this (<0 = off)");

  // ---- train-policy ----
  Common tp_common;
  std::string tp_tasks = "1";
  std::string tp_gan;
  std::string tp_reward = "shaped";
  std::string tp_sampling = "uniform";
  PpoConfig tp_cfg;
  auto* tp = app.add_subcommand("train-policy", "train the insertion policy with the clipped-surrogate objective");
  add_common(tp, tp_common);
  tp->add_option("--tasks", tp_tasks, "comma-separated task ids, e.g. 1,2,3,4");
  tp->add_option("--steps", tp_cfg.total_steps, "total environment steps");
  tp->add_option("--n-envs", tp_cfg.n_envs, "parallel environments");
  tp->add_option("--horizon", tp_cfg.horizon, "steps per env per update");
  tp->add_option("--lr", tp_cfg.lr, "learning rate");
  tp->add_option("--clip", tp_cfg.clip_eps, "surrogate clipping factor");
  tp->add_option("--gamma", tp_cfg.gamma, "discount");
  tp->add_option("--lam", tp_cfg.gae_lambda, "advantage estimator lambda");
  tp->add_option("--epochs", tp_cfg.epochs, "optimization epochs per update");
  tp->add_option("--minibatch", tp_cfg.minibatch_size, "minibatch size");
  tp->add_option("--entropy-coef", tp_cfg.entropy_coef, "entropy bonus weight");
  tp->add_option("--value-coef", tp_cfg.value_coef, "value loss weight");
  tp->add_option("--reward", tp_reward, "shaped or sparse")->check(CLI::IsMember({"shaped", "sparse"}));
  tp->add_option("--image-size", tp_cfg.env.image_size, "observation size, 64 or 128");
  tp->add_option("--gan", tp_gan, "translator checkpoint, required for tasks 5-7");
  tp->add_option("--sampling", tp_sampling, "task sampling: uniform or round-robin")
      ->check(CLI::IsMember({"uniform", "round-robin"}));
  tp->add_option("--eval-every", tp_cfg.eval_every_updates, "evaluate every N updates (0 = off)");
  tp->add_option("--eval-episodes", tp_cfg.eval_episodes, "episodes per evaluation");
  tp->add_option("--early-stop", tp_cfg.early_stop_success, "stop once eval success reaches this (<0 = off)");

  // ---- eval ----
  Common ev_common;
  std::string ev_policy, ev_gan;
  std::string ev_tasks = "1";
  EvalConfig ev_cfg;
  auto* ev = app.add_subcommand("eval", "evaluate a policy on sim-domain tasks and report the robustness metric");
  add_common(ev, ev_common);
  ev->add_option("--policy", ev_policy, "policy checkpoint")->required();
  ev->add_option("--gan", ev_gan, "translator checkpoint (needed for tasks 5-7)");
  ev->add_option("--tasks", ev_tasks, "comma-separated task ids");
  ev->add_option("--episodes", ev_cfg.episodes_per_task, "episodes per task");
  ev->add_option("--max-steps", ev_cfg.max_steps, "step cap per episode");
  bool ev_mean = false;
  ev->add_flag("--mean-actions", ev_mean, "use the deterministic action mean instead of sampling");

  // ---- run-real2sim ----
  Common rs_common;
  std::string rs_policy, rs_gan;
  std::string rs_tasks = "2";
  std::string rs_adaptation = "on";
  std::string rs_noise = "off";
  EvalConfig rs_cfg;
  rs_cfg.sample_actions = true;  // the inference loop samples
  std::uint64_t rs_bg_seed = 999;
  float rs_occ_x = 0.22f, rs_occ_y = 0.25f, rs_occ_w = 0.16f, rs_occ_h = 0.16f, rs_occ_gray = 0.7f;
  float rs_light_gain = 1.15f, rs_tint_r = 0.04f, rs_tint_g = 0.02f, rs_tint_b = -0.02f;
  int rs_dump_pairs = 0;
  auto* rs = app.add_subcommand("run-real2sim", "run the Real2Sim inference loop on synthetic-real observations");
  add_common(rs, rs_common);
  rs->add_option("--policy", rs_policy, "policy checkpoint")->required();
  rs->add_option("--gan", rs_gan, "translator checkpoint")->required();
  rs->add_option("--tasks", rs_tasks, "comma-separated task ids");
  rs->add_option("--episodes", rs_cfg.episodes_per_task, "episodes per task");
  rs->add_option("--max-steps", rs_cfg.max_steps, "step cap per episode");
  rs->add_option("--adaptation", rs_adaptation, "on: translate first; off: feed raw real observations")
      ->check(CLI::IsMember({"on", "off"}));
  rs->add_option("--noise", rs_noise, "comma subset of background,front,light or off");
  rs->add_option("--noise-bg-seed", rs_bg_seed, "background texture-swap seed");
  rs->add_option("--occ-x", rs_occ_x, "occluder centre x (normalized)");
  rs->add_option("--occ-y", rs_occ_y, "occluder centre y (normalized)");
  rs->add_option("--occ-w", rs_occ_w, "occluder width (normalized)");
  rs->add_option("--occ-h", rs_occ_h, "occluder height (normalized)");
  rs->add_option("--occ-gray", rs_occ_gray, "occluder gray level");
  rs->add_option("--light-gain", rs_light_gain, "light noise gain");
  rs->add_option("--light-tint-r", rs_tint_r, "light noise tint, red");
  rs->add_option("--light-tint-g", rs_tint_g, "light noise tint, green");
  rs->add_option("--light-tint-b", rs_tint_b, "light noise tint, blue");
  rs->add_option("--dump-pairs", rs_dump_pairs, "save this many (real, translated) step pairs as PPM");

  // ---- gradcheck ----
  Common gc_common;
  int gc_samples = 40;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer family, both precisions");
  add_common(gc, gc_common);
  gc->add_option("--samples", gc_samples, "parameter entries sampled per family");

  // ---- parse ----
  args = detail::apply_config_file(std::move(args));
  std::reverse(args.begin(), args.end());  // CLI11 consumes reversed vectors
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  ParsedRun run;
  auto finish_resolve = [&](const std::string& name, json j) {
    run.command = name;
    run.values = std::move(j);
  };

  if (rd->parsed()) {
    json j = common_json(rd_common);
    j["domain"] = rd_domain;
    j["count"] = rd_count;
    j["image_size"] = rd_image_size;
    finish_resolve("render-dataset", j);
    if (resolve_only) { *resolve_only = run; return 0; }
    setup_threads(rd_common);
    EnvConfig env;
    env.image_size = rd_image_size;
    detail::write_run_json(rd_common.out, run);
    render_dataset(rd_domain == "sim" ? Domain::kSim : Domain::kReal, rd_count, rd_common.seed, rd_common.out, env,
                   rd_image_size);
    std::cout << "wrote " << rd_count << " " << rd_domain << " images to " << rd_common.out << "\n";
    return 0;
  }

  if (tg->parsed()) {
    json j = common_json(tg_common);
    j["sim_data"] = tg_sim_data;
    j["real_data"] = tg_real_data;
    j["iters"] = tg_cfg.iterations;
    j["batch"] = tg_cfg.batch;
    j["lr"] = tg_cfg.lr;
    j["lambda_cycle"] = tg_cfg.lambda_cycle;
    j["lambda_identity"] = tg_cfg.lambda_identity;
    j["base_channels"] = tg_cfg.base_channels;
    j["replay"] = tg_cfg.replay_size;
    j["holdout"] = tg_cfg.holdout_fraction;
    j["eval_every"] = tg_cfg.eval_every;
    j["early_stop_mae"] = tg_cfg.early_stop_mae;
    finish_resolve("train-gan", j);
    if (resolve_only) { *resolve_only = run; return 0; }
    setup_threads(tg_common);
    detail::write_run_json(tg_common.out, run);
    auto sim = load_dataset(tg_sim_data, Domain::kSim);
    auto real = load_dataset(tg_real_data, Domain::kReal);
    tg_cfg.image_size = sim.front().width;
    std::ofstream log(std::filesystem::path(tg_common.out) / "gan_log.jsonl", std::ios::binary);
    auto result = train_gan(sim, real, tg_cfg, tg_common.seed, [&](const GanLogEntry& e) {
      json r = {{"iteration", e.iteration}, {"g_adv_ab", e.g_adv_ab}, {"g_adv_ba", e.g_adv_ba},
                {"cycle_a", e.cycle_a},     {"cycle_b", e.cycle_b},   {"d_a", e.d_a},
                {"d_b", e.d_b}};
      if (e.holdout_mae >= 0.0f) {
        r["holdout_mae"] = e.holdout_mae;
        r["hole_contrast_real"] = e.contrast_real;
        r["hole_contrast_translated"] = e.contrast_translated;
      }
      log << r.dump() << std::endl;
    });
    result.gan->save((std::filesystem::path(tg_common.out) / "gan.ckpt").string());
    std::cout << "iterations: " << result.iterations_run << "  held-out cycle MAE: " << result.final_holdout_mae << "\n";
    if (!result.log.empty() && result.log.back().holdout_mae >= 0.0f)
      std::cout << "hole contrast (feature-loss diagnostic): real " << result.log.back().contrast_real
                << " -> translated " << result.log.back().contrast_translated << "\n";
    return 0;
  }

  if (tp->parsed()) {
    json j = common_json(tp_common);
    j["tasks"] = tp_tasks;
    j["steps"] = tp_cfg.total_steps;
    j["n_envs"] = tp_cfg.n_envs;
    j["horizon"] = tp_cfg.horizon;
    j["lr"] = tp_cfg.lr;
    j["clip"] = tp_cfg.clip_eps;
    j["gamma"] = tp_cfg.gamma;
    j["lam"] = tp_cfg.gae_lambda;
    j["epochs"] = tp_cfg.epochs;
    j["minibatch"] = tp_cfg.minibatch_size;
    j["entropy_coef"] = tp_cfg.entropy_coef;
    j["value_coef"] = tp_cfg.value_coef;
    j["reward"] = tp_reward;
    j["image_size"] = tp_cfg.env.image_size;
    j["gan"] = tp_gan;
    j["sampling"] = tp_sampling;
    j["eval_every"] = tp_cfg.eval_every_updates;
    j["eval_episodes"] = tp_cfg.eval_episodes;
    j["early_stop"] = tp_cfg.early_stop_success;
    finish_resolve("train-policy", j);
    if (resolve_only) { *resolve_only = run; return 0; }

    tp_cfg.mix.tasks = detail::parse_task_list(tp_tasks);
    tp_cfg.mix.sampling = tp_sampling == "round-robin" ? TaskSampling::kRoundRobin : TaskSampling::kUniformOnReset;
    if (tp_cfg.mix.needs_gan() && tp_gan.empty()) {
      std::cerr << "train-policy: tasks 5-7 wrap observations through the trained translator; pass --gan "
                   "with a checkpoint produced by train-gan first\n";
      return 1;
    }
    setup_threads(tp_common);
    tp_cfg.env.reward_mode = tp_reward == "sparse" ? EnvConfig::Reward::kSparse : EnvConfig::Reward::kShaped;
    detail::write_run_json(tp_common.out, run);
    std::unique_ptr<CycleGan> gan;
    if (!tp_gan.empty()) gan = std::make_unique<CycleGan>(CycleGan::load_file(tp_gan));
    std::ofstream log(std::filesystem::path(tp_common.out) / "train_log.jsonl", std::ios::binary);
    auto result = train_policy(tp_cfg, tp_common.seed, gan.get(), [&](const TrainLogEntry& e) {
      json r = {{"step", e.step},          {"update", e.update},         {"mean_return", e.mean_return},
                {"success_rate", e.success_rate}, {"policy_loss", e.policy_loss}, {"value_loss", e.value_loss},
                {"entropy", e.entropy},    {"clip_fraction", e.clip_fraction}};
      if (e.eval_success >= 0.0f) r["eval_success"] = e.eval_success;
      log << r.dump() << std::endl;
    });
    result.policy->save((std::filesystem::path(tp_common.out) / "policy.ckpt").string());
    if (!result.fault.empty()) {
      std::cerr << "training halted on numeric fault: " << result.fault << " (partial checkpoint written)\n";
      return 2;
    }
    std::cout << "steps: " << result.steps_run << (result.early_stopped ? " (early stop)" : "") << "\n";
    return 0;
  }

  if (ev->parsed()) {
    json j = common_json(ev_common);
    j["policy"] = ev_policy;
    j["gan"] = ev_gan;
    j["tasks"] = ev_tasks;
    j["episodes"] = ev_cfg.episodes_per_task;
    j["max_steps"] = ev_cfg.max_steps;
    j["mean_actions"] = ev_mean;
    finish_resolve("eval", j);
    if (resolve_only) { *resolve_only = run; return 0; }
    ev_cfg.tasks = detail::parse_task_list(ev_tasks);
    TaskMix probe{ev_cfg.tasks, TaskSampling::kUniformOnReset};
    if (probe.needs_gan() && ev_gan.empty()) {
      std::cerr << "eval: tasks 5-7 need --gan with a trained translator checkpoint\n";
      return 1;
    }
    setup_threads(ev_common);
    ev_cfg.sample_actions = !ev_mean;
    ev_cfg.seed = ev_common.seed;
    detail::write_run_json(ev_common.out, run);
    PolicyNet policy = PolicyNet::load_file(ev_policy);
    std::unique_ptr<CycleGan> gan;
    if (!ev_gan.empty()) gan = std::make_unique<CycleGan>(CycleGan::load_file(ev_gan));
    EnvConfig env;
    env.image_size = policy.image_size;
    RobustnessReport report = run_episodes(policy, ev_cfg, env, PipelineMode::kSimDirect, gan.get());
    detail::write_report(ev_common.out, report);
    std::cout << "sigma: " << report.sigma << "  success_rate: " << report.success_rate << "\n";
    return 0;
  }

  if (rs->parsed()) {
    json j = common_json(rs_common);
    j["policy"] = rs_policy;
    j["gan"] = rs_gan;
    j["tasks"] = rs_tasks;
    j["episodes"] = rs_cfg.episodes_per_task;
    j["max_steps"] = rs_cfg.max_steps;
    j["adaptation"] = rs_adaptation;
    j["noise"] = rs_noise;
    j["noise_bg_seed"] = rs_bg_seed;
    j["occ_x"] = rs_occ_x;
    j["occ_y"] = rs_occ_y;
    j["occ_w"] = rs_occ_w;
    j["occ_h"] = rs_occ_h;
    j["occ_gray"] = rs_occ_gray;
    j["light_gain"] = rs_light_gain;
    j["light_tint_r"] = rs_tint_r;
    j["light_tint_g"] = rs_tint_g;
    j["light_tint_b"] = rs_tint_b;
    j["dump_pairs"] = rs_dump_pairs;
    finish_resolve("run-real2sim", j);
    if (resolve_only) { *resolve_only = run; return 0; }
    setup_threads(rs_common);
    rs_cfg.tasks = detail::parse_task_list(rs_tasks);
    rs_cfg.seed = rs_common.seed;
    rs_cfg.adaptation = rs_adaptation == "on";
    if (rs_noise != "off") {
      std::stringstream ss(rs_noise);
      std::string part;
      while (std::getline(ss, part, ',')) {
        if (part == "background") {
          rs_cfg.noise.background_swap = true;
          rs_cfg.noise.background_seed = rs_bg_seed;
        } else if (part == "front") {
          rs_cfg.noise.front = true;
          rs_cfg.noise.occluder = {{rs_occ_x, rs_occ_y}, {rs_occ_w, rs_occ_h}, {rs_occ_gray, rs_occ_gray, rs_occ_gray}};
        } else if (part == "light") {
          rs_cfg.noise.light = true;
          rs_cfg.noise.light_noise = {rs_light_gain, {rs_tint_r, rs_tint_g, rs_tint_b}};
        } else {
          std::cerr << "run-real2sim: unknown noise component '" << part << "'\n";
          return 1;
        }
      }
    }
    detail::write_run_json(rs_common.out, run);
    PolicyNet policy = PolicyNet::load_file(rs_policy);
    CycleGan gan = CycleGan::load_file(rs_gan);
    EnvConfig env;
    env.image_size = policy.image_size;
    RobustnessReport report = run_real2sim_episodes(rs_cfg, gan, policy, env);
    detail::write_report(rs_common.out, report);
    if (rs_dump_pairs > 0) {
      // visual inspection pairs from a fresh episode
      InsertionEnv probe_env(env, ObsMode::kSyntheticReal, rs_cfg.noise);
      auto [state, obs] = probe_env.reset(rs_cfg.tasks.front(), mix_seed(rs_common.seed, 0xD0));
      Rng rng(mix_seed(rs_common.seed, 0xD1));
      for (int t = 0; t < rs_dump_pairs && !probe_env.done(); ++t) {
        auto [action, translated] = real2sim_step(obs, gan, policy, rng, rs_cfg.sample_actions);
        char name_a[32], name_b[32];
        std::snprintf(name_a, sizeof(name_a), "pair_%03d_real.ppm", t);
        std::snprintf(name_b, sizeof(name_b), "pair_%03d_sim.ppm", t);
        write_ppm((std::filesystem::path(rs_common.out) / name_a).string(), obs);
        write_ppm((std::filesystem::path(rs_common.out) / name_b).string(), translated);
        obs = probe_env.step(action).observation;
      }
    }
    std::cout << "adaptation: " << rs_adaptation << "  noise: " << rs_noise << "  sigma: " << report.sigma
              << "  success_rate: " << report.success_rate << "\n";
    return 0;
  }

  if (gc->parsed()) {
    json j = common_json(gc_common);
    j["samples"] = gc_samples;
    finish_resolve("gradcheck", j);
    if (resolve_only) { *resolve_only = run; return 0; }
    setup_threads(gc_common);
    bool ok = true;
    for (const auto& line : run_gradcheck(gc_common.seed, gc_samples)) {
      const bool pass = line.max_rel_err_64 < kGradTol64 && line.max_rel_err_32 < kGradTol32;
      ok = ok && pass;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-14s 64-bit max_rel_err=%.3e  32-bit max_rel_err=%.3e  %s", line.family.c_str(),
                    line.max_rel_err_64, line.max_rel_err_32, pass ? "PASS" : "FAIL");
      std::cout << buf << "\n";
    }
    return ok ? 0 : 2;
  }

  return 0;
}

inline int cli_main(std::vector<std::string> args) {
  try {
    return cli_run(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

inline ParsedRun cli_resolve(std::vector<std::string> args) {
  ParsedRun run;
  cli_run(std::move(args), &run);
  return run;
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(std::move(args));
}

}  // namespace r2s::cli
