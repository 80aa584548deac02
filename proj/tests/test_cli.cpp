#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "r2s/cli.hpp"

using namespace r2s;
using r2s::cli::cli_main;
using r2s::cli::cli_resolve;

namespace {

std::filesystem::path work_dir() {
  auto dir = std::filesystem::temp_directory_path() / "r2s_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_config(const std::string& name, const std::string& body) {
  const auto path = work_dir() / name;
  std::ofstream os(path);
  os << body;
  return path.string();
}

struct CaptureStderr {
  std::ostringstream captured;
  std::streambuf* old;
  CaptureStderr() : old(std::cerr.rdbuf(captured.rdbuf())) {}
  ~CaptureStderr() { std::cerr.rdbuf(old); }
};

struct CaptureStdout {
  std::ostringstream captured;
  std::streambuf* old;
  CaptureStdout() : old(std::cout.rdbuf(captured.rdbuf())) {}
  ~CaptureStdout() { std::cout.rdbuf(old); }
};

}  // namespace

TEST_CASE("render-dataset subcommand writes files, manifest, and run.json") {
  const auto out = work_dir() / "ds";
  std::filesystem::remove_all(out);
  CaptureStdout quiet;
  const int code = cli_main({"render-dataset", "--domain", "sim", "--count", "5", "--seed", "7", "--out", out.string()});
  REQUIRE(code == 0);
  int ppm = 0;
  for (const auto& e : std::filesystem::directory_iterator(out))
    if (e.path().extension() == ".ppm") ++ppm;
  REQUIRE(ppm == 5);
  REQUIRE(std::filesystem::exists(out / "manifest.tsv"));
  REQUIRE(std::filesystem::exists(out / "run.json"));

  std::ifstream rj(out / "run.json");
  nlohmann::json j = nlohmann::json::parse(rj);
  REQUIRE(j["command"] == "render-dataset");
  REQUIRE(j["seed"] == 7);
  REQUIRE(j["count"] == 5);
  REQUIRE(j["domain"] == "sim");
}

TEST_CASE("generative tasks without a translator are a usage error naming --gan") {
  CaptureStderr capture;
  const int code = cli_main({"train-policy", "--tasks", "5", "--steps", "10", "--out", (work_dir() / "tp").string()});
  REQUIRE(code == 1);
  REQUIRE(capture.captured.str().find("--gan") != std::string::npos);
  REQUIRE(capture.captured.str().find("train-gan") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with help on stderr") {
  CaptureStderr capture;
  REQUIRE(cli_main({"no-such-command"}) == 1);
  REQUIRE(capture.captured.str().find("usage error") != std::string::npos);
  CaptureStderr capture2;
  REQUIRE(cli_main({"render-dataset", "--bogus-flag", "3"}) == 1);
  CaptureStderr capture3;
  REQUIRE(cli_main({}) == 1);
}

TEST_CASE("unknown config file keys are rejected") {
  const std::string cfg = write_config("bad.cfg", "bogus_key = 12\n");
  CaptureStderr capture;
  REQUIRE(cli_main({"render-dataset", "--config", cfg}) == 1);
}

TEST_CASE("missing config file is a runtime error") {
  CaptureStderr capture;
  REQUIRE(cli_main({"render-dataset", "--config", (work_dir() / "nope.cfg").string()}) == 2);
}

TEST_CASE("flag beats config file beats default, per field") {
  struct Field {
    std::string command;
    std::string key;
    std::string default_value;
    std::string file_value;
    std::string flag_value;
  };
  const std::vector<Field> fields = {
      {"render-dataset", "count", "100", "20", "30"},
      {"render-dataset", "domain", "sim", "real", "sim"},
      {"render-dataset", "seed", "0", "5", "9"},
      {"render-dataset", "image-size", "64", "128", "64"},
      {"train-policy", "steps", "200000", "500", "700"},
      {"train-policy", "lr", "0.0003", "0.001", "0.002"},
      {"train-policy", "tasks", "1", "1,2", "3,4"},
      {"train-policy", "clip", "0.2", "0.1", "0.3"},
      {"train-policy", "gamma", "0.99", "0.9", "0.95"},
      {"train-policy", "n-envs", "8", "2", "4"},
      {"train-gan", "iters", "10000", "50", "75"},
      {"train-gan", "lambda-cycle", "10", "5", "7"},
      {"train-gan", "batch", "16", "4", "8"},
      {"eval", "episodes", "100", "10", "20"},
      {"eval", "max-steps", "120", "60", "90"},
      {"run-real2sim", "episodes", "100", "10", "20"},
      {"run-real2sim", "adaptation", "on", "off", "on"},
      {"run-real2sim", "noise", "off", "background", "light"},
      {"gradcheck", "samples", "40", "10", "20"},
  };

  auto base_args = [&](const std::string& command) -> std::vector<std::string> {
    if (command == "train-gan") return {command, "--sim-data", "simdir", "--real-data", "realdir"};
    if (command == "eval") return {command, "--policy", "p.ckpt"};
    if (command == "run-real2sim") return {command, "--policy", "p.ckpt", "--gan", "g.ckpt"};
    return {command};
  };
  auto resolved_key = [](std::string key) {
    for (auto& c : key)
      if (c == '-') c = '_';
    return key;
  };
  auto value_of = [&](const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(resolved_key(key));
    if (v.is_string()) return v.get<std::string>();
    std::ostringstream os;
    if (v.is_number_float()) {
      double d = v.get<double>();
      if (d == static_cast<std::int64_t>(d)) os << static_cast<std::int64_t>(d);
      else os << d;
    } else {
      os << v;
    }
    return os.str();
  };

  for (const auto& f : fields) {
    INFO(f.command << " --" << f.key);
    // defaults only
    auto run = cli_resolve(base_args(f.command));
    REQUIRE(value_of(run.values, f.key) == f.default_value);
    // config file only
    const std::string cfg = write_config("prec.cfg", f.key + " = " + f.file_value + "\n");
    auto args_file = base_args(f.command);
    args_file.push_back("--config");
    args_file.push_back(cfg);
    run = cli_resolve(args_file);
    REQUIRE(value_of(run.values, f.key) == f.file_value);
    // flag only
    auto args_flag = base_args(f.command);
    args_flag.push_back("--" + f.key);
    args_flag.push_back(f.flag_value);
    run = cli_resolve(args_flag);
    REQUIRE(value_of(run.values, f.key) == f.flag_value);
    // flag wins over config file
    auto args_both = base_args(f.command);
    args_both.push_back("--config");
    args_both.push_back(cfg);
    args_both.push_back("--" + f.key);
    args_both.push_back(f.flag_value);
    run = cli_resolve(args_both);
    REQUIRE(value_of(run.values, f.key) == f.flag_value);
  }
}

TEST_CASE("gradcheck subcommand passes and reports per family") {
  CaptureStdout capture;
  const int code = cli_main({"gradcheck", "--samples", "10"});
  REQUIRE(code == 0);
  const std::string out = capture.captured.str();
  REQUIRE(out.find("conv2d") != std::string::npos);
  REQUIRE(out.find("policy_net") != std::string::npos);
  REQUIRE(out.find("PASS") != std::string::npos);
  REQUIRE(out.find("FAIL") == std::string::npos);
}

TEST_CASE("identical runs produce byte-identical artifacts") {
  const auto out1 = work_dir() / "det1";
  const auto out2 = work_dir() / "det2";
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
  CaptureStdout quiet;
  REQUIRE(cli_main({"render-dataset", "--count", "3", "--seed", "11", "--domain", "real", "--out", out1.string()}) == 0);
  REQUIRE(cli_main({"render-dataset", "--count", "3", "--seed", "11", "--domain", "real", "--out", out2.string()}) == 0);
  for (const auto& entry : std::filesystem::directory_iterator(out1)) {
    if (entry.path().filename() == "run.json") continue;  // records --out, which differs
    std::ifstream f1(entry.path(), std::ios::binary);
    std::ifstream f2(out2 / entry.path().filename(), std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
  }
}

TEST_CASE("help exits 0") {
  CaptureStdout capture;
  REQUIRE(cli_main({"--help"}) == 0);
  REQUIRE(capture.captured.str().find("train-policy") != std::string::npos);
}

TEST_CASE("end-to-end micro pipeline through the cli") {
  const auto root = work_dir() / "pipeline";
  std::filesystem::remove_all(root);
  CaptureStdout quiet;
  REQUIRE(cli_main({"render-dataset", "--domain", "sim", "--count", "6", "--seed", "1", "--out", (root / "sim").string()}) == 0);
  REQUIRE(cli_main({"render-dataset", "--domain", "real", "--count", "6", "--seed", "2", "--out", (root / "real").string()}) == 0);
  REQUIRE(cli_main({"train-gan", "--sim-data", (root / "sim").string(), "--real-data", (root / "real").string(),
                    "--iters", "2", "--batch", "2", "--base-channels", "2", "--out", (root / "gan").string()}) == 0);
  REQUIRE(std::filesystem::exists(root / "gan" / "gan.ckpt"));
  REQUIRE(std::filesystem::exists(root / "gan" / "gan_log.jsonl"));
  REQUIRE(cli_main({"train-policy", "--tasks", "1", "--steps", "16", "--n-envs", "2", "--horizon", "8",
                    "--minibatch", "8", "--epochs", "1", "--out", (root / "policy").string()}) == 0);
  REQUIRE(std::filesystem::exists(root / "policy" / "policy.ckpt"));
  REQUIRE(std::filesystem::exists(root / "policy" / "train_log.jsonl"));
  REQUIRE(cli_main({"eval", "--policy", (root / "policy" / "policy.ckpt").string(), "--tasks", "1", "--episodes", "2",
                    "--max-steps", "10", "--out", (root / "eval").string()}) == 0);
  REQUIRE(std::filesystem::exists(root / "eval" / "report.json"));
  REQUIRE(std::filesystem::exists(root / "eval" / "episodes.jsonl"));
  REQUIRE(cli_main({"run-real2sim", "--policy", (root / "policy" / "policy.ckpt").string(), "--gan",
                    (root / "gan" / "gan.ckpt").string(), "--tasks", "2", "--episodes", "2", "--max-steps", "10",
                    "--noise", "background,front,light", "--dump-pairs", "2", "--out", (root / "r2s").string()}) == 0);
  REQUIRE(std::filesystem::exists(root / "r2s" / "report.json"));
  REQUIRE(std::filesystem::exists(root / "r2s" / "pair_000_real.ppm"));
  REQUIRE(std::filesystem::exists(root / "r2s" / "pair_000_sim.ppm"));

  // a report parses and carries the expected fields
  std::ifstream rf(root / "eval" / "report.json");
  nlohmann::json report = nlohmann::json::parse(rf);
  REQUIRE(report.contains("sigma"));
  REQUIRE(report.contains("success_rate"));
  REQUIRE(report["per_task"].size() == 1);
}
