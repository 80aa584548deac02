#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "r2s/eval.hpp"

using namespace r2s;

namespace {
std::vector<EpisodeRecord> make_records(const std::vector<int>& tasks, int episodes, Rng& rng,
                                        std::vector<std::vector<float>>* raw_steps = nullptr) {
  std::vector<EpisodeRecord> records;
  for (int t : tasks)
    for (int e = 0; e < episodes; ++e) {
      EpisodeRecord rec;
      rec.task = t;
      rec.seed = rng.next_u64();
      rec.steps = static_cast<int>(rng.uniform_int(1, 30));
      std::vector<float> steps;
      double ret = 0.0;
      for (int s = 0; s < rec.steps; ++s) {
        const float r = static_cast<float>(rng.uniform(-1, 1));
        steps.push_back(r);
        ret += r;
      }
      rec.episode_return = ret;
      rec.success = rng.uniform() < 0.5;
      if (raw_steps) raw_steps->push_back(std::move(steps));
      records.push_back(rec);
    }
  return records;
}
}  // namespace

TEST_CASE("sigma arithmetic") {
  std::vector<EpisodeRecord> records;
  // 2 tasks x 2 episodes, total reward 8
  records.push_back({1, 0, 3, 2.0, true});
  records.push_back({1, 0, 3, 2.0, true});
  records.push_back({2, 0, 3, 3.0, true});
  records.push_back({2, 0, 3, 1.0, false});
  REQUIRE(robustness_sigma(records, 2, 2) == Catch::Approx(2.0).margin(1e-12));

  for (auto& r : records) r.episode_return = 0.0;
  REQUIRE(robustness_sigma(records, 2, 2) == 0.0);
}

TEST_CASE("sigma equals brute-force per-step summation to 1e-9") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_tasks = static_cast<int>(rng.uniform_int(1, 4));
    const int episodes = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<int> tasks;
    for (int t = 1; t <= n_tasks; ++t) tasks.push_back(t);
    std::vector<std::vector<float>> raw;
    auto records = make_records(tasks, episodes, rng, &raw);
    const double sigma = robustness_sigma(records, n_tasks, episodes);

    double total = 0.0;  // independent per-step re-summation
    for (const auto& steps : raw)
      for (float r : steps) total += static_cast<double>(r);
    REQUIRE(std::abs(sigma - total / (static_cast<double>(n_tasks) * episodes)) < 1e-9);
  }
}

TEST_CASE("sigma is linear in the rewards and permutation invariant") {
  Rng rng(23);
  auto records = make_records({1, 2, 3}, 5, rng);
  const double sigma = robustness_sigma(records, 3, 5);
  auto scaled = records;
  for (auto& r : scaled) r.episode_return *= 2.5;
  REQUIRE(robustness_sigma(scaled, 3, 5) == Catch::Approx(2.5 * sigma).margin(1e-9));

  auto shuffled = records;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  REQUIRE(robustness_sigma(shuffled, 3, 5) == Catch::Approx(sigma).margin(1e-12));
}

TEST_CASE("incomplete evaluations are rejected") {
  Rng rng(29);
  auto records = make_records({1, 2}, 3, rng);
  REQUIRE_THROWS_AS(robustness_sigma(records, 3, 3), IncompleteEvaluationError);
  records.pop_back();
  REQUIRE_THROWS_AS(robustness_sigma(records, 2, 3), IncompleteEvaluationError);
}

TEST_CASE("13 trials with 12 successes report 92.3 percent") {
  std::vector<EpisodeRecord> records;
  for (int e = 0; e < 13; ++e) records.push_back({1, 0, 10, 1.0, e != 7});
  RobustnessReport report = summarize(records, 1, 13);
  REQUIRE(report.success_rate == Catch::Approx(12.0 / 13.0).margin(1e-12));
  REQUIRE(report.success_rate == Catch::Approx(0.923).margin(5e-4));
  REQUIRE(report.per_task.size() == 1);
  REQUIRE(report.per_task[0].episodes == 13);
}

TEST_CASE("report is recomputable from its own records") {
  PolicyNet policy(64, 3);
  EvalConfig cfg;
  cfg.tasks = {1, 2};
  cfg.episodes_per_task = 3;
  cfg.max_steps = 25;
  cfg.seed = 5;
  RobustnessReport report = run_episodes(policy, cfg, EnvConfig{}, PipelineMode::kSimDirect);
  REQUIRE(report.records.size() == 6);
  REQUIRE(robustness_sigma(report.records, 2, 3) == Catch::Approx(report.sigma).margin(1e-12));
  double successes = 0;
  for (const auto& r : report.records) successes += r.success ? 1 : 0;
  REQUIRE(report.success_rate == Catch::Approx(successes / 6.0).margin(1e-12));
  for (const auto& r : report.records) REQUIRE(r.steps <= 25);
}

TEST_CASE("episode evaluation is order independent across worker counts") {
  PolicyNet policy(64, 3);
  EvalConfig cfg;
  cfg.tasks = {1, 2};
  cfg.episodes_per_task = 2;
  cfg.max_steps = 15;
  cfg.seed = 11;
  ThreadPool::global().set_threads(1);
  RobustnessReport serial = run_episodes(policy, cfg, EnvConfig{}, PipelineMode::kSimDirect);
  ThreadPool::global().set_threads(4);
  RobustnessReport parallel = run_episodes(policy, cfg, EnvConfig{}, PipelineMode::kSimDirect);
  ThreadPool::global().set_threads(0);
  REQUIRE(serial.sigma == parallel.sigma);
  REQUIRE(serial.records.size() == parallel.records.size());
  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    REQUIRE(serial.records[i].task == parallel.records[i].task);
    REQUIRE(serial.records[i].episode_return == parallel.records[i].episode_return);
  }
}

TEST_CASE("real2sim_step translates, retags, and guards the pipeline order") {
  PolicyNet policy(64, 5);
  CycleGan gan(4, 7);
  EnvConfig cfg;
  InsertionEnv env(cfg, ObsMode::kSyntheticReal);
  auto [state, obs] = env.reset(2, 3);
  REQUIRE(obs.domain == Domain::kReal);

  Rng rng(9);
  auto [action, translated] = real2sim_step(obs, gan, policy, rng);
  REQUIRE(translated.domain == Domain::kSim);
  REQUIRE(action.dx >= -1.0f);
  REQUIRE(action.dx <= 1.0f);

  // same observation and rng state give the same action
  Rng rng2(9);
  auto [action2, translated2] = real2sim_step(obs, gan, policy, rng2);
  REQUIRE(action.dx == action2.dx);
  REQUIRE(action.dy == action2.dy);
  REQUIRE(same_pixels(translated, translated2));

  // the pipeline is exactly translate-then-act
  Rng rng3(9);
  const Image manual = translate_image(gan.gab, obs, Domain::kSim);
  REQUIRE(same_pixels(manual, translated));
  const PolicyEval ev = policy_forward(policy, manual);
  const ActionSample manual_action = sample_action(ev.mean, ev.log_std, rng3);
  REQUIRE(manual_action.action.dx == action.dx);
  REQUIRE(manual_action.action.dy == action.dy);

  // sim-tagged input is a pipeline-order violation
  Image sim_obs = env.reset(2, 4).second;
  sim_obs.domain = Domain::kSim;
  REQUIRE_THROWS_AS(real2sim_step(sim_obs, gan, policy, rng), PipelineOrderError);
}

TEST_CASE("run_real2sim_episodes completes records in both modes") {
  PolicyNet policy(64, 5);
  CycleGan gan(4, 7);
  EvalConfig cfg;
  cfg.tasks = {2};
  cfg.episodes_per_task = 2;
  cfg.max_steps = 10;
  cfg.seed = 13;
  cfg.adaptation = true;
  EnvConfig env;
  RobustnessReport adapted = run_real2sim_episodes(cfg, gan, policy, env);
  REQUIRE(adapted.records.size() == 2);
  cfg.adaptation = false;
  RobustnessReport ablated = run_real2sim_episodes(cfg, gan, policy, env);
  REQUIRE(ablated.records.size() == 2);
  // same seeds, so the episode seeds match pairwise
  for (std::size_t i = 0; i < 2; ++i) REQUIRE(adapted.records[i].seed == ablated.records[i].seed);
}

TEST_CASE("eval config validation") {
  PolicyNet policy(64, 5);
  EvalConfig cfg;
  cfg.episodes_per_task = 0;
  REQUIRE_THROWS_AS(run_episodes(policy, cfg, EnvConfig{}, PipelineMode::kSimDirect), ConfigError);
  EvalConfig cfg2;
  cfg2.tasks = {5};
  REQUIRE_THROWS_AS(run_episodes(policy, cfg2, EnvConfig{}, PipelineMode::kSimDirect), ConfigError);
  EvalConfig cfg3;
  REQUIRE_THROWS_AS(run_episodes(policy, cfg3, EnvConfig{}, PipelineMode::kReal2Sim, nullptr), ConfigError);
}
