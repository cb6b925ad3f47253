// Batch planner: load map and config, initialize, optimize, evaluate, write
// artifacts.
//
// Exit status: 0 ok, 1 I/O or unexpected error, 2 bad config, 3 infeasible
// initialization, 4 solve failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsp/baselines.hpp"
#include "bsp/config.hpp"
#include "bsp/gridmap.hpp"
#include "bsp/harness.hpp"
#include "bsp/io.hpp"
#include "bsp/maps.hpp"

namespace fs = std::filesystem;
using bsp::json;

namespace {

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

bsp::OccupancyGrid load_map(const bsp::Config& cfg) {
  if (!cfg.map_file.empty()) {
    std::ifstream in(cfg.map_file);
    if (!in) throw bsp::ConfigError("cannot read map '" + cfg.map_file + "'");
    try {
      return bsp::read_grid(in);
    } catch (const std::exception& e) {
      throw bsp::ConfigError(cfg.map_file + ": " + e.what());
    }
  }
  if (cfg.map_generator == "boundary") return bsp::boundary_map();
  if (cfg.map_generator == "corridor") return bsp::corridor_map();
  throw bsp::ConfigError("config: map.generate must be 'boundary' or 'corridor'");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw bsp::ConfigError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bsp::BeliefPolicy read_policy(const fs::path& p) {
  const json j = bsp::parse_json_text(read_text(p), p.string());
  bsp::BeliefPolicy pol;
  try {
    for (const auto& s : j.at("steps")) {
      const auto b = s.at("belief").get<std::vector<double>>();
      const auto u = s.at("u").get<std::vector<double>>();
      const auto k = s.at("k").get<std::vector<double>>();
      const auto K = s.at("K").get<std::vector<std::vector<double>>>();
      if (b.size() != 9 || u.size() != 2 || k.size() != 2 || K.size() != 2) throw bsp::ConfigError("bad policy step");
      pol.nominal.states.push_back(Eigen::Map<const bsp::BeliefVector>(b.data()));
      pol.nominal.controls.emplace_back(u[0], u[1]);
      pol.feedforward.emplace_back(k[0], k[1]);
      Eigen::Matrix<double, 2, 9> g;
      for (int r = 0; r < 2; ++r) {
        if (K[static_cast<std::size_t>(r)].size() != 9) throw bsp::ConfigError("bad policy gain");
        for (int c = 0; c < 9; ++c) g(r, c) = K[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
      pol.gains.push_back(g);
    }
    const auto tb = j.at("terminal_belief").get<std::vector<double>>();
    if (tb.size() != 9) throw bsp::ConfigError("bad terminal belief");
    pol.nominal.states.push_back(Eigen::Map<const bsp::BeliefVector>(tb.data()));
  } catch (const json::exception& e) {
    throw bsp::ConfigError(p.string() + ": " + e.what());
  } catch (const bsp::ConfigError& e) {
    throw bsp::ConfigError(p.string() + ": " + e.what());
  }
  return pol;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-space iLQG planner"};
  std::string config_path, method_name = "uilqg", stages = "all", out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> rollouts, jobs;
  bool no_wall_time = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--method", method_name, "nilqg | eilqg | uilqg | milqg | ilqr")
      ->check(CLI::IsMember({"nilqg", "eilqg", "uilqg", "milqg", "ilqr"}));
  app.add_option("--stages", stages, "init | solve | eval | all")->check(CLI::IsMember({"init", "solve", "eval", "all"}));
  app.add_option("--seed", seed, "rollout seed (overrides eval.seed)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--rollouts", rollouts, "rollout count (overrides eval.rollouts)");
  app.add_option("--jobs", jobs, "worker threads for linearization and rollouts");
  app.add_flag("--no-wall-time", no_wall_time, "write null wall_time so summaries are reproducible byte for byte");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    bsp::Config cfg;
    if (!config_path.empty()) cfg = bsp::load_config(config_path);
    if (seed) cfg.eval.seed = *seed;
    if (rollouts) cfg.eval.rollouts = *rollouts;
    if (jobs) cfg.eval.jobs = cfg.optimizer.jobs = *jobs;
    const bsp::Method method = bsp::parse_method(method_name);
    cfg.optimizer = bsp::method_config(method, cfg.optimizer);
    cfg.validate();

    const fs::path out(out_dir);
    fs::create_directories(out);

    auto env = bsp::make_environment(load_map(cfg), cfg.motion, cfg.sensor, cfg.ukf, cfg.costs, cfg.robot_radius,
                                     cfg.unknown_as_occupied);
    {
      std::ofstream map_out(out / "map.txt", std::ios::binary);
      bsp::write_grid(map_out, env->grid);
    }
    const bool run_init = stages == "init" || stages == "all";
    const bool run_solve = stages == "solve" || stages == "all";
    const bool run_eval = stages == "eval" || stages == "all";

    // init
    bsp::ControlFile init;
    if (run_init) {
      if (cfg.task.init_method == "file") {
        init = bsp::read_control_file(cfg.task.init_file);
      } else {
        init.start = cfg.task.start;
        try {
          init.controls = bsp::init_trajectory(*env, bsp::Pose::from_vector(cfg.task.start),
                                               bsp::Pose::from_vector(cfg.task.goal), cfg.task.init);
        } catch (const bsp::InitializationFailed& e) {
          throw ExitError(3, e.what());
        }
      }
      write_text(out / "init.json", bsp::control_file_json(init).dump() + "\n");
    } else if (run_solve) {
      init = bsp::read_control_file(out / "init.json");
    }

    // solve
    bsp::PlanResult planned;
    bool have_plan = false;
    if (run_solve) {
      std::ofstream iters(out / "iters.jsonl", std::ios::binary);
      auto log = [&](const bsp::IterationLog& it) { iters << bsp::iteration_json(it).dump() << '\n'; };
      bsp::BeliefVector b0 = cfg.task.initial_belief();
      b0.head<3>() = bsp::Pose::from_vector(init.start).vector();
      try {
        planned = bsp::plan(method, env, b0, init.controls, cfg.optimizer, log);
      } catch (const bsp::InfeasibleInitialization& e) {
        throw ExitError(3, e.what());
      } catch (const bsp::ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ExitError(4, std::string("solve failed: ") + e.what());
      }
      have_plan = true;
      write_text(out / "policy.json", bsp::policy_json(planned.policy, method).dump() + "\n");
    }

    // eval
    json summary;
    summary["method"] = bsp::method_name(method);
    summary["expected_cost"] = nullptr;
    summary["collision_rate"] = nullptr;
    summary["iterations"] = have_plan ? json(planned.iterations()) : json(nullptr);
    summary["wall_time"] = nullptr;
    if (run_eval) {
      const bsp::BeliefPolicy policy = have_plan ? planned.policy : read_policy(out / "policy.json");
      bsp::RolloutOptions opt;
      opt.inject_noise = !cfg.eval.noiseless;
      const auto records = bsp::run_rollouts(policy, *env, bsp::rollout_filter(method), cfg.eval.rollouts,
                                             cfg.eval.seed, cfg.eval.jobs, opt);
      std::ofstream rf(out / "rollouts.jsonl", std::ios::binary);
      for (const auto& r : records) rf << bsp::rollout_json(r).dump() << '\n';
      const auto s = bsp::summarize(records, cfg.eval.seed);
      summary["expected_cost"] = s.expected_cost;
      summary["collision_rate"] = s.collision_rate;
      summary["cost_std_error"] = s.cost_std_error;
      summary["n_rollouts"] = s.n_rollouts;
      summary["seed"] = s.seed;
    }
    if (have_plan) {
      json stages_json = json::array();
      for (const auto& st : planned.stages) {
        stages_json.push_back({{"mu", st.mu},
                               {"nu", st.nu},
                               {"iterations", st.report.iterations},
                               {"converged", st.report.converged},
                               {"reason", st.report.reason},
                               {"final_cost", st.report.cost_trace.back()},
                               {"expected_cost", st.report.expected_cost}});
      }
      summary["schedule"] = std::move(stages_json);
      summary["note"] = planned.note;
    }
    summary["config"] = bsp::config_json(cfg);
    if (!no_wall_time) {
      summary["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return 0;
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const bsp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
