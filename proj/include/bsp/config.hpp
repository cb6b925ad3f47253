#pragma once

// JSON run configuration: defaults, file overrides, validation and the
// effective-config echo.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsp/baselines.hpp"
#include "bsp/belief.hpp"
#include "bsp/costs.hpp"
#include "bsp/harness.hpp"
#include "bsp/ilqg.hpp"
#include "bsp/models.hpp"

namespace bsp {

using json = nlohmann::ordered_json;

/// Malformed or invalid configuration; the CLI maps it to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskConfig {
  Vec3 start{2.0, 2.0, 0.25 * std::numbers::pi};
  Vec3 goal{8.0, 8.0, 0.25 * std::numbers::pi};
  Mat3 initial_cov = Vec3(0.01, 0.01, 0.001).asDiagonal();
  Mat3 goal_cov = Mat3::Zero();
  std::string init_method = "rrt";  // rrt | file
  std::string init_file;
  InitParams init;

  BeliefVector initial_belief() const { return Belief::from_covariance(Pose::from_vector(start), initial_cov).vector(); }
  BeliefVector goal_belief() const { return Belief::from_covariance(Pose::from_vector(goal), goal_cov).vector(); }
};

struct EvalConfig {
  int rollouts = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool noiseless = false;
};

struct Config {
  std::string map_file;   // resolved against the config directory
  std::string map_generator = "boundary";  // used when map_file is empty: boundary | corridor
  double robot_radius = 0.2;
  bool unknown_as_occupied = true;
  MotionParams motion;
  SensorParams sensor;
  UkfParams ukf;
  CostParams costs;
  OptimizerConfig optimizer;
  EvalConfig eval;
  TaskConfig task;

  Config() {
    sensor.beam_angles = SensorParams::default_beams();
    costs = CostParams::defaults(task.goal_belief());
  }

  void validate() const {
    try {
      motion.validate();
      sensor.validate();
      ukf_check();
      costs.validate();
      optimizer.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (eval.rollouts < 1) throw ConfigError("config: eval.rollouts must be >= 1");
    if (eval.jobs < 1) throw ConfigError("config: eval.jobs must be >= 1");
    if (!(robot_radius >= 0.0)) throw ConfigError("config: map.robot_radius must be >= 0");
    if (task.init_method != "rrt" && task.init_method != "file") {
      throw ConfigError("config: task.init.method must be 'rrt' or 'file'");
    }
    if (task.init_method == "file" && task.init_file.empty()) throw ConfigError("config: task.init.file is required");
  }

  void ukf_check() const {
    const double lambda = ukf.alpha * ukf.alpha * (3 + ukf.kappa) - 3;
    if (!(3 + lambda > 0.0)) throw std::invalid_argument("invalid spread parameters");
  }
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

/// Reads typed fields from a JSON object and rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.push_back(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw ConfigError("config: unknown key '" + path_ + "." + k + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <int N>
Eigen::Matrix<double, N, N> parse_matrix(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "' must be a list of numbers");
  }
  Eigen::Matrix<double, N, N> m = Eigen::Matrix<double, N, N>::Zero();
  if (v.size() == static_cast<std::size_t>(N)) {
    for (int i = 0; i < N; ++i) m(i, i) = v[static_cast<std::size_t>(i)];
  } else if (v.size() == static_cast<std::size_t>(N * N)) {
    for (int r = 0; r < N; ++r) {
      for (int c = 0; c < N; ++c) m(r, c) = v[static_cast<std::size_t>(r * N + c)];
    }
  } else {
    throw ConfigError("config: '" + where + "' needs " + std::to_string(N) + " diagonal or " + std::to_string(N * N) +
                      " row-major entries");
  }
  return m;
}

inline Vec3 parse_vec3(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "' must be a list of numbers");
  }
  if (v.size() != 3) throw ConfigError("config: '" + where + "' needs 3 entries [x, y, theta]");
  return {v[0], v[1], v[2]};
}

template <int N>
json matrix_json(const Eigen::Matrix<double, N, N>& m) {
  json a = json::array();
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) a.push_back(m(r, c));
  }
  return a;
}

inline json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

/// Applies a parsed JSON document on top of `cfg`. Relative paths resolve
/// against `base_dir`.
inline void apply_config(Config& cfg, const json& root, const std::filesystem::path& base_dir = {}) {
  using detail::Section;
  Section top(root, "config");

  if (top.has("map")) {
    Section s(top.at("map"), "map");
    std::string file;
    s.get("file", file);
    if (!file.empty()) {
      const std::filesystem::path p(file);
      cfg.map_file = (p.is_absolute() || base_dir.empty() ? p : base_dir / p).string();
    }
    s.get("generate", cfg.map_generator);
    s.get("robot_radius", cfg.robot_radius);
    s.get("unknown_as_occupied", cfg.unknown_as_occupied);
    s.get("unknown_blocks_rays", cfg.sensor.unknown_blocks_rays);
    s.finish();
  }
  if (top.has("motion")) {
    Section s(top.at("motion"), "motion");
    s.get("tau", cfg.motion.tau);
    s.get("sigma_v", cfg.motion.sigma_v);
    s.get("sigma_w", cfg.motion.sigma_w);
    s.finish();
  }
  if (top.has("sensor")) {
    Section s(top.at("sensor"), "sensor");
    s.get("beam_angles", cfg.sensor.beam_angles);
    s.get("r_max", cfg.sensor.r_max);
    s.get("sigma_n", cfg.sensor.sigma_n);
    s.get("cast_range_factor", cfg.sensor.cast_range_factor);
    s.get("alpha", cfg.ukf.alpha);
    s.get("beta", cfg.ukf.beta);
    s.get("kappa", cfg.ukf.kappa);
    s.get("literal_weights", cfg.ukf.literal_weights);
    s.finish();
  }
  if (top.has("schedule")) {
    Section s(top.at("schedule"), "schedule");
    auto& sc = cfg.optimizer.schedule;
    s.get("mu0", sc.mu0);
    s.get("nu0", sc.nu0);
    s.get("lambda_mu", sc.lambda_mu);
    s.get("lambda_nu", sc.lambda_nu);
    s.get("mu_max", sc.mu_max);
    s.get("nu_max", sc.nu_max);
    s.get("until_both_caps", cfg.optimizer.schedule_until_both_caps);
    cfg.sensor.step_mu = sc.mu_max;
    cfg.sensor.step_nu = sc.nu_max;
    s.finish();
  }
  if (top.has("task")) {
    Section s(top.at("task"), "task");
    if (s.has("start")) cfg.task.start = detail::parse_vec3(s.at("start"), "task.start");
    if (s.has("goal")) cfg.task.goal = detail::parse_vec3(s.at("goal"), "task.goal");
    if (s.has("initial_cov")) cfg.task.initial_cov = detail::parse_matrix<3>(s.at("initial_cov"), "task.initial_cov");
    if (s.has("goal_cov")) cfg.task.goal_cov = detail::parse_matrix<3>(s.at("goal_cov"), "task.goal_cov");
    if (s.has("init")) {
      Section in(s.at("init"), "task.init");
      in.get("method", cfg.task.init_method);
      std::string file;
      in.get("file", file);
      if (!file.empty()) {
        const std::filesystem::path p(file);
        cfg.task.init_file = (p.is_absolute() || base_dir.empty() ? p : base_dir / p).string();
      }
      auto& ip = cfg.task.init;
      in.get("v_nominal", ip.v_nominal);
      in.get("v_max", ip.v_max);
      in.get("w_max", ip.w_max);
      in.get("clearance", ip.clearance);
      in.get("max_steps", ip.max_steps);
      in.get("node_budget", ip.node_budget);
      in.get("seed", ip.seed);
      in.finish();
    }
    s.finish();
  }
  if (top.has("costs")) {
    Section s(top.at("costs"), "costs");
    if (s.has("q_stage")) cfg.costs.q_stage = detail::parse_matrix<9>(s.at("q_stage"), "costs.q_stage");
    if (s.has("q_terminal")) cfg.costs.q_terminal = detail::parse_matrix<9>(s.at("q_terminal"), "costs.q_terminal");
    if (s.has("r")) cfg.costs.r = detail::parse_matrix<2>(s.at("r"), "costs.r");
    s.get("q_c", cfg.costs.q_c);
    s.get("q_d", cfg.costs.q_d);
    s.finish();
  }
  if (top.has("optimizer")) {
    Section s(top.at("optimizer"), "optimizer");
    auto& o = cfg.optimizer;
    s.get("max_iterations", o.max_iterations);
    s.get("abs_tol", o.abs_tol);
    s.get("rel_tol", o.rel_tol);
    s.get("tol_window", o.tol_window);
    s.get("rho_init", o.rho_init);
    s.get("rho_scale", o.rho_scale);
    s.get("rho_min", o.rho_min);
    s.get("rho_max", o.rho_max);
    s.get("shrink", o.shrink);
    s.get("min_step", o.min_step);
    s.get("fd_state", o.fd_state);
    s.get("fd_control", o.fd_control);
    s.get("fd_noise", o.fd_noise);
    s.get("cost_gradient_step", o.cost_steps.gradient);
    s.get("cost_hessian_step", o.cost_steps.hessian);
    s.get("jobs", o.jobs);
    s.finish();
  }
  if (top.has("eval")) {
    Section s(top.at("eval"), "eval");
    s.get("rollouts", cfg.eval.rollouts);
    s.get("seed", cfg.eval.seed);
    s.get("jobs", cfg.eval.jobs);
    s.get("noiseless", cfg.eval.noiseless);
    s.finish();
  }
  top.finish();
  cfg.costs.goal = cfg.task.goal_belief();
}

inline json parse_json_text(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(name + ": " + detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": malformed JSON (" +
                      std::string(e.what()) + ")");
  }
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Config cfg;
  apply_config(cfg, parse_json_text(ss.str(), path.string()), path.parent_path());
  return cfg;
}

/// Effective configuration, complete enough to reproduce a run.
inline json config_json(const Config& c) {
  using detail::matrix_json;
  json j;
  j["map"] = {{"file", c.map_file},
              {"generate", c.map_generator},
              {"robot_radius", c.robot_radius},
              {"unknown_as_occupied", c.unknown_as_occupied},
              {"unknown_blocks_rays", c.sensor.unknown_blocks_rays}};
  j["motion"] = {{"tau", c.motion.tau}, {"sigma_v", c.motion.sigma_v}, {"sigma_w", c.motion.sigma_w}};
  j["sensor"] = {{"beam_angles", c.sensor.beam_angles},
                 {"r_max", c.sensor.r_max},
                 {"sigma_n", c.sensor.sigma_n},
                 {"cast_range_factor", c.sensor.cast_range_factor},
                 {"alpha", c.ukf.alpha},
                 {"beta", c.ukf.beta},
                 {"kappa", c.ukf.kappa},
                 {"literal_weights", c.ukf.literal_weights}};
  const auto& s = c.optimizer.schedule;
  j["schedule"] = {{"mu0", s.mu0},
                   {"nu0", s.nu0},
                   {"lambda_mu", s.lambda_mu},
                   {"lambda_nu", s.lambda_nu},
                   {"mu_max", s.mu_max},
                   {"nu_max", s.nu_max},
                   {"until_both_caps", c.optimizer.schedule_until_both_caps}};
  j["task"] = {{"start", detail::vec_json(c.task.start)},
               {"goal", detail::vec_json(c.task.goal)},
               {"initial_cov", matrix_json<3>(c.task.initial_cov)},
               {"goal_cov", matrix_json<3>(c.task.goal_cov)},
               {"init",
                {{"method", c.task.init_method},
                 {"file", c.task.init_file},
                 {"v_nominal", c.task.init.v_nominal},
                 {"v_max", c.task.init.v_max},
                 {"w_max", c.task.init.w_max},
                 {"clearance", c.task.init.clearance},
                 {"max_steps", c.task.init.max_steps},
                 {"node_budget", c.task.init.node_budget},
                 {"seed", c.task.init.seed}}}};
  j["costs"] = {{"q_stage", matrix_json<9>(c.costs.q_stage)},
                {"q_terminal", matrix_json<9>(c.costs.q_terminal)},
                {"r", matrix_json<2>(c.costs.r)},
                {"q_c", c.costs.q_c},
                {"q_d", c.costs.q_d}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"max_iterations", o.max_iterations},
                    {"abs_tol", o.abs_tol},
                    {"rel_tol", o.rel_tol},
                    {"tol_window", o.tol_window},
                    {"rho_init", o.rho_init},
                    {"rho_scale", o.rho_scale},
                    {"rho_min", o.rho_min},
                    {"rho_max", o.rho_max},
                    {"shrink", o.shrink},
                    {"min_step", o.min_step},
                    {"fd_state", o.fd_state},
                    {"fd_control", o.fd_control},
                    {"fd_noise", o.fd_noise},
                    {"cost_gradient_step", o.cost_steps.gradient},
                    {"cost_hessian_step", o.cost_steps.hessian},
                    {"jobs", o.jobs}};
  j["eval"] = {{"rollouts", c.eval.rollouts},
               {"seed", c.eval.seed},
               {"jobs", c.eval.jobs},
               {"noiseless", c.eval.noiseless}};
  return j;
}

}  // namespace bsp
