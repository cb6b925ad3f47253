#pragma once

// Artifact serialization: policy.json, iters.jsonl, rollouts.jsonl and the
// initial-trajectory file.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsp/baselines.hpp"
#include "bsp/config.hpp"
#include "bsp/harness.hpp"

namespace bsp {

inline constexpr int kArtifactSchema = 1;

inline json policy_json(const BeliefPolicy& p, Method method) {
  json steps = json::array();
  for (int t = 0; t < p.horizon(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    json gain = json::array();
    for (int r = 0; r < 2; ++r) {
      json row = json::array();
      for (int c = 0; c < 9; ++c) row.push_back(p.gains[i](r, c));
      gain.push_back(std::move(row));
    }
    steps.push_back({{"belief", detail::vec_json(p.nominal.states[i])},
                     {"u", detail::vec_json(p.nominal.controls[i])},
                     {"k", detail::vec_json(p.feedforward[i])},
                     {"K", std::move(gain)}});
  }
  return {{"schema", kArtifactSchema},
          {"method", method_name(method)},
          {"horizon", p.horizon()},
          {"steps", std::move(steps)},
          {"terminal_belief", detail::vec_json(p.nominal.states.back())}};
}

inline json iteration_json(const IterationLog& it) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"outer_iter", it.outer_iter}, {"inner_iter", it.inner_iter}, {"mu", it.mu},
          {"nu", it.nu},                 {"rho", it.rho},               {"eps", it.eps},
          {"nominal_cost", num(it.nominal_cost)},
          {"expected_cost", num(it.expected_cost)},
          {"accepted", it.accepted}};
}

inline json rollout_json(const RolloutRecord& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    json valid = json::array();
    for (bool v : s.valid) valid.push_back(v ? 1 : 0);
    steps.push_back({{"pose", detail::vec_json(s.pose)},
                     {"belief", detail::vec_json(s.belief)},
                     {"u", detail::vec_json(s.u)},
                     {"z", detail::vec_json(s.z)},
                     {"valid", std::move(valid)},
                     {"cost", s.cost}});
  }
  return {{"seed", r.seed},
          {"steps", std::move(steps)},
          {"final_pose", detail::vec_json(r.final_pose)},
          {"final_belief", detail::vec_json(r.final_belief)},
          {"terminal_cost", r.terminal_cost},
          {"collided", r.collided},
          {"truncated", r.truncated},
          {"skipped_updates", r.skipped_updates},
          {"total_cost", r.total_cost}};
}

/// Initial trajectory: {"start": [x, y, theta], "controls": [[v, w], ...]}.
struct ControlFile {
  Vec3 start = Vec3::Zero();
  std::vector<Vec2> controls;
};

inline json control_file_json(const ControlFile& f) {
  json c = json::array();
  for (const auto& u : f.controls) c.push_back({u.x(), u.y()});
  return {{"start", detail::vec_json(f.start)}, {"controls", std::move(c)}};
}

inline ControlFile read_control_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read trajectory file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = parse_json_text(ss.str(), path.string());
  ControlFile f;
  try {
    f.start = detail::parse_vec3(j.at("start"), "start");
    for (const auto& u : j.at("controls")) {
      const auto v = u.get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError(path.string() + ": every control needs [v, w]");
      f.controls.emplace_back(v[0], v[1]);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return f;
}

}  // namespace bsp
