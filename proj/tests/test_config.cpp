#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "bsp/config.hpp"

using namespace bsp;
namespace fs = std::filesystem;

namespace {

Config from_text(const std::string& text, const fs::path& base = {}) {
  Config c;
  apply_config(c, parse_json_text(text, "test.json"), base);
  return c;
}

std::string error_of(const std::string& text) {
  try {
    from_text(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bsp_test_config_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_plan(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BSP_PLAN_EXE) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsValidate) {
  Config c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.motion.tau, 0.1);
  EXPECT_EQ(c.motion.sigma_v, 0.5);
  EXPECT_EQ(c.motion.sigma_w, 0.05);
  EXPECT_EQ(c.sensor.r_max, 2.0);
  EXPECT_EQ(c.sensor.sigma_n, 0.5);
  EXPECT_EQ(c.sensor.beams(), 5);
  EXPECT_EQ(c.optimizer.schedule.mu_max, 1e3);
  EXPECT_EQ(c.optimizer.schedule.nu_max, 1e3);
  EXPECT_EQ(c.optimizer.max_iterations, 200);
  EXPECT_EQ(c.eval.rollouts, 100);
}

TEST(Config, MalformedJsonReportsLine) {
  const std::string text = "{\n  \"motion\": {\n    \"tau\": 0.1,,\n  }\n}\n";
  try {
    from_text(text);
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_NE(error_of(R"({"motion": {"tau": 0.1, "sigma": 1}})").find("motion.sigma"), std::string::npos);
  EXPECT_NE(error_of(R"({"planner": {}})").find("config.planner"), std::string::npos);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_NE(error_of(R"({"motion": {"tau": "fast"}})").find("motion.tau"), std::string::npos);
  EXPECT_NE(error_of(R"({"task": {"start": [1, 2]}})").find("task.start"), std::string::npos);
  EXPECT_NE(error_of(R"({"eval": 3})").find("eval"), std::string::npos);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_FALSE(error_of(R"({"motion": {"tau": 0}})").empty());
  EXPECT_FALSE(error_of(R"({"sensor": {"sigma_n": -1}})").empty());
  EXPECT_FALSE(error_of(R"({"costs": {"r": [1, -1]}})").empty());
  EXPECT_FALSE(error_of(R"({"schedule": {"mu0": 2000}})").empty());
  EXPECT_FALSE(error_of(R"({"eval": {"rollouts": 0}})").empty());
  EXPECT_FALSE(error_of(R"({"task": {"init": {"method": "sst"}}})").empty());
}

TEST(Config, MatrixForms) {
  const Config a = from_text(R"({"costs": {"r": [2, 3]}, "task": {"initial_cov": [1, 0.5, 0, 0.5, 2, 0, 0, 0, 3]}})");
  EXPECT_EQ(a.costs.r(0, 0), 2.0);
  EXPECT_EQ(a.costs.r(1, 1), 3.0);
  EXPECT_EQ(a.costs.r(0, 1), 0.0);
  EXPECT_EQ(a.task.initial_cov(0, 1), 0.5);
  EXPECT_EQ(a.task.initial_cov(1, 0), 0.5);
  EXPECT_EQ(a.task.initial_cov(2, 2), 3.0);
  EXPECT_NE(error_of(R"({"costs": {"q_stage": [1, 2, 3]}})").find("costs.q_stage"), std::string::npos);
}

TEST(Config, GoalFeedsCosts) {
  const Config c = from_text(R"({"task": {"goal": [5, 6, 0.5], "goal_cov": [0.04, 0.04, 0.01]}})");
  EXPECT_EQ(c.costs.goal[0], 5.0);
  EXPECT_EQ(c.costs.goal[1], 6.0);
  EXPECT_EQ(c.costs.goal[2], 0.5);
  EXPECT_NEAR(c.costs.goal[3], 0.2, 1e-12);
  EXPECT_NEAR(c.costs.goal[8], 0.1, 1e-12);
}

TEST(Config, ScheduleCapsDriveStepModel) {
  const Config c = from_text(R"({"schedule": {"mu_max": 500, "nu_max": 200}})");
  EXPECT_EQ(c.sensor.step_mu, 500.0);
  EXPECT_EQ(c.sensor.step_nu, 200.0);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  const Config c = from_text(R"({"map": {"file": "m.txt"}, "task": {"init": {"method": "file", "file": "i.json"}}})",
                             "/some/dir");
  EXPECT_EQ(c.map_file, "/some/dir/m.txt");
  EXPECT_EQ(c.task.init_file, "/some/dir/i.json");
  EXPECT_EQ(from_text(R"({"map": {"file": "/abs/m.txt"}})", "/some/dir").map_file, "/abs/m.txt");
}

TEST(Config, EchoRoundTrips) {
  const Config a = from_text(R"({"schedule": {"mu0": 20, "nu0": 10}, "costs": {"q_c": 7}, "eval": {"seed": 9}})");
  const json echo = config_json(a);
  const Config b = from_text(echo.dump());
  EXPECT_EQ(config_json(b), echo);
}

TEST(Config, NilqgStartsAtCaps) {
  Config c = from_text(R"({"schedule": {"mu0": 10, "nu0": 5, "mu_max": 800, "nu_max": 900}})");
  const OptimizerConfig n = method_config(Method::Nilqg, c.optimizer);
  EXPECT_EQ(n.schedule.mu0, 800.0);
  EXPECT_EQ(n.schedule.nu0, 900.0);
  EXPECT_TRUE(n.stochastic_terms);
  EXPECT_FALSE(method_config(Method::Milqg, c.optimizer).stochastic_terms);
  EXPECT_EQ(method_config(Method::Uilqg, c.optimizer).schedule.mu0, 10.0);
}

TEST(Config, BundledConfigsLoad) {
  for (const char* name : {"boundary.json", "corridor.json"}) {
    const Config c = load_config(fs::path(BSP_DATA_DIR) / name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_TRUE(fs::exists(c.map_file)) << c.map_file;
  }
}

TEST(Cli, MalformedConfigExitsTwo) {
  const fs::path dir = scratch("malformed");
  std::ofstream(dir / "bad.json") << "{\n  \"eval\": {\n    \"rollouts\": ,\n  }\n}\n";
  EXPECT_EQ(run_plan("--config " + (dir / "bad.json").string() + " --out " + (dir / "out").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("line 3"), std::string::npos) << slurp(dir / "log");
}

TEST(Cli, UnknownMethodExitsTwo) {
  const fs::path dir = scratch("method");
  EXPECT_EQ(run_plan("--method sst --out " + (dir / "out").string(), dir / "log"), 2);
}

TEST(Cli, InfeasibleStartExitsThree) {
  const fs::path dir = scratch("infeasible");
  std::ofstream(dir / "c.json") << R"({"task": {"start": [0.05, 5, 0]}})";
  EXPECT_EQ(run_plan("--config " + (dir / "c.json").string() + " --stages init --out " + (dir / "out").string(),
                     dir / "log"),
            3);
}

TEST(Cli, SummarySchemaAndEffectiveConfig) {
  const fs::path dir = scratch("schema");
  std::ofstream(dir / "c.json") << R"({"task": {"start": [2, 2, 0], "goal": [3, 2, 0]},
                                       "optimizer": {"max_iterations": 5}})";
  ASSERT_EQ(run_plan("--config " + (dir / "c.json").string() + " --method nilqg --rollouts 3 --out " +
                         (dir / "out").string(),
                     dir / "log"),
            0)
      << slurp(dir / "log");
  for (const char* f : {"map.txt", "init.json", "iters.jsonl", "policy.json", "rollouts.jsonl", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const json s = json::parse(slurp(dir / "out" / "summary.json"));
  for (const char* k : {"method", "expected_cost", "collision_rate", "iterations", "wall_time"}) {
    EXPECT_TRUE(s.contains(k)) << k;
  }
  EXPECT_EQ(s["method"], "nilqg");
  EXPECT_TRUE(s["wall_time"].is_number());
  EXPECT_EQ(s["config"]["schedule"]["mu0"], 1000.0);
  EXPECT_EQ(s["config"]["schedule"]["nu0"], 1000.0);
  EXPECT_EQ(s["config"]["eval"]["rollouts"], 3);

  std::ifstream rollouts(dir / "out" / "rollouts.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(rollouts, line)) {
    const json r = json::parse(line);
    for (const char* k : {"seed", "steps", "collided", "total_cost"}) EXPECT_TRUE(r.contains(k)) << k;
    const json& st = r["steps"].front();
    EXPECT_EQ(st["pose"].size(), 3u);
    EXPECT_EQ(st["belief"].size(), 9u);
    EXPECT_EQ(st["u"].size(), 2u);
    EXPECT_EQ(st["z"].size(), st["valid"].size());
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(Cli, EvalStageReusesPolicy) {
  const fs::path dir = scratch("stages");
  std::ofstream(dir / "c.json") << R"({"task": {"start": [2, 2, 0], "goal": [3, 2, 0]},
                                       "optimizer": {"max_iterations": 5}})";
  const std::string base = "--config " + (dir / "c.json").string() + " --method nilqg --rollouts 4 --out ";
  ASSERT_EQ(run_plan(base + (dir / "all").string() + " --no-wall-time", dir / "log"), 0);
  fs::create_directories(dir / "split");
  ASSERT_EQ(run_plan(base + (dir / "split").string() + " --stages init", dir / "log"), 0);
  ASSERT_EQ(run_plan(base + (dir / "split").string() + " --stages solve", dir / "log"), 0);
  ASSERT_EQ(run_plan(base + (dir / "split").string() + " --stages eval", dir / "log"), 0);
  EXPECT_EQ(slurp(dir / "all" / "rollouts.jsonl"), slurp(dir / "split" / "rollouts.jsonl"));
}
