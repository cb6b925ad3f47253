#pragma once

// Monte Carlo evaluation against the true system and the kinematic
// trajectory initializer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "bsp/baselines.hpp"
#include "bsp/belief.hpp"
#include "bsp/models.hpp"
#include "bsp/planning.hpp"

namespace bsp {

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of rollout `index` under run seed `seed`.
inline std::uint64_t rollout_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutStep {
  Vec3 pose;
  BeliefVector belief;
  Vec2 u;
  Eigen::VectorXd z;
  std::vector<bool> valid;
  double cost = 0.0;
};

struct RolloutRecord {
  std::uint64_t seed = 0;
  std::vector<RolloutStep> steps;
  BeliefVector final_belief = BeliefVector::Zero();
  Vec3 final_pose = Vec3::Zero();
  double terminal_cost = 0.0;
  bool collided = false;
  bool truncated = false;  // true pose left the map
  int skipped_updates = 0;  // steps whose estimate left the map
  double total_cost = 0.0;
};

struct RolloutOptions {
  bool inject_noise = true;        // motion, measurement and initial-state sampling
  std::optional<Vec3> true_start;  // overrides sampling the initial true pose
};

/// One closed-loop execution. The estimator uses the true (step) noise scale
/// and drops saturated beams; costs are evaluated on the estimated belief.
inline RolloutRecord simulate_rollout(const BeliefPolicy& policy, const Environment& env, FilterKind estimator,
                                      std::uint64_t seed, const RolloutOptions& opt = {}) {
  RolloutRecord rec;
  rec.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const RangeSensor sensor(env.grid, env.sensor_with(StepNoise{}));
  const UnicycleMotion motion{env.motion};
  const int l = policy.horizon();
  BeliefVector b = policy.nominal.states.front();

  Pose x_true;
  if (opt.true_start) {
    x_true = Pose::from_vector(*opt.true_start);
  } else if (opt.inject_noise) {
    const Vec3 n(normal(rng), normal(rng), normal(rng));
    x_true = retract(Pose::from_vector(b.head<3>()), unvech(b.tail<6>()) * n);
  } else {
    x_true = Pose::from_vector(b.head<3>());
  }
  if (env.collides(x_true)) rec.collided = true;
  if (!env.grid.contains(x_true.translation)) rec.truncated = true;

  for (int t = 0; t < l && !rec.truncated; ++t) {
    const auto i = static_cast<std::size_t>(t);
    RolloutStep step;
    step.pose = x_true.vector();
    step.belief = b;
    step.u = policy.control(t, belief_minus(b, policy.nominal.states[i]));
    step.cost = bsp::stage_cost(b, step.u, env.costs, env.obstacles);

    Vec2 m = Vec2::Zero();
    if (opt.inject_noise) m = Vec2(env.motion.sigma_v * normal(rng), env.motion.sigma_w * normal(rng));
    x_true = motion_step(x_true, step.u, m, env.motion);

    const auto belief = Belief::from_vector(b);
    if (!env.grid.contains(x_true.translation)) {
      rec.collided = rec.truncated = true;
      step.z = Eigen::VectorXd::Constant(sensor.dim(), env.sensor.r_max);
      step.valid.assign(static_cast<std::size_t>(sensor.dim()), false);
      rec.total_cost += step.cost;
      rec.steps.push_back(std::move(step));
      break;
    }
    if (env.collides(x_true)) rec.collided = true;

    const TrueMeasurement meas = sample_true_measurement(x_true, env.grid, env.sensor, rng, opt.inject_noise);
    // An estimate (or sigma point) outside the map has no predicted
    // measurement; that step keeps the prediction.
    if (estimator == FilterKind::Ukf) {
      const auto prior = ukf_predict(belief, step.u, motion, env.ukf);
      try {
        b = ukf_update(prior, meas.z, sensor, env.ukf, &meas.valid).posterior.vector();
      } catch (const std::out_of_range&) {
        b = prior.vector();
        ++rec.skipped_updates;
      }
    } else {
      const auto prior = ekf_predict(belief, step.u, motion);
      try {
        b = ekf_update(prior, meas.z, sensor, &meas.valid).posterior.vector();
      } catch (const std::out_of_range&) {
        b = prior.vector();
        ++rec.skipped_updates;
      }
    }
    step.z = meas.z;
    step.valid = meas.valid;
    rec.total_cost += step.cost;
    rec.steps.push_back(std::move(step));
  }
  rec.final_belief = b;
  rec.final_pose = x_true.vector();
  if (!rec.truncated) {
    rec.terminal_cost = bsp::terminal_cost(b, env.costs, env.obstacles);
    rec.total_cost += rec.terminal_cost;
  }
  return rec;
}

struct EvalSummary {
  double expected_cost = 0.0;
  double cost_std_error = 0.0;
  double collision_rate = 0.0;
  int n_rollouts = 0;
  std::uint64_t seed = 0;
};

inline EvalSummary summarize(const std::vector<RolloutRecord>& records, std::uint64_t seed) {
  EvalSummary s;
  s.seed = seed;
  s.n_rollouts = static_cast<int>(records.size());
  if (records.empty()) return s;
  double sum = 0.0, collided = 0.0;
  for (const auto& r : records) {
    sum += r.total_cost;
    collided += r.collided ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(records.size());
  s.expected_cost = sum / n;
  s.collision_rate = collided / n;
  if (records.size() > 1) {
    double ss = 0.0;
    for (const auto& r : records) ss += (r.total_cost - s.expected_cost) * (r.total_cost - s.expected_cost);
    s.cost_std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

/// n rollouts with streams derived from (seed, index), run on `jobs` threads
/// and returned in index order.
inline std::vector<RolloutRecord> run_rollouts(const BeliefPolicy& policy, const Environment& env,
                                               FilterKind estimator, int n, std::uint64_t seed, int jobs = 1,
                                               const RolloutOptions& opt = {}) {
  if (n < 1) throw std::invalid_argument("rollout count must be >= 1");
  std::vector<RolloutRecord> records(static_cast<std::size_t>(n));
  detail::parallel_for(n, jobs, [&](int i) {
    records[static_cast<std::size_t>(i)] =
        simulate_rollout(policy, env, estimator, rollout_seed(seed, static_cast<std::uint64_t>(i)), opt);
  });
  return records;
}

inline EvalSummary evaluate_policy(const BeliefPolicy& policy, const Environment& env, FilterKind estimator, int n,
                                   std::uint64_t seed, int jobs = 1) {
  return summarize(run_rollouts(policy, env, estimator, n, seed, jobs), seed);
}

// ---------------------------------------------------------------------------
// Initialization

struct InitParams {
  double v_nominal = 1.0;      // m/s for direct arcs
  double v_max = 1.5;
  double w_max = 1.5;
  double clearance = 0.3;      // required Euclidean clearance of every step
  int max_steps = 200;
  int node_budget = 20000;
  int expansion_steps = 5;
  int expansion_samples = 8;
  double goal_bias = 0.2;
  double goal_tolerance = 0.15;  // position error accepted at the goal
  std::uint64_t seed = 1;
};

class InitializationFailed : public std::runtime_error {
 public:
  InitializationFailed() : std::runtime_error("initialization failed") {}
};

namespace detail {

/// Constant (v, w) arc from `from` through the goal position, if the goal is
/// ahead and every step keeps the clearance. Returns the controls.
inline std::optional<std::vector<Vec2>> direct_arc(const Environment& env, const Pose& from, const Vec2& goal,
                                                   const InitParams& p, int steps_left) {
  const Vec2 d = from.rotation().transpose() * (goal - from.translation);
  const double dist = d.norm();
  if (dist < 1e-9) return std::vector<Vec2>{};
  const double phi = std::atan2(d.y(), d.x());
  if (std::abs(phi) > 0.5 * std::numbers::pi) return std::nullopt;
  const double sweep = 2.0 * phi;
  const double length = std::abs(phi) < 1e-9 ? dist : sweep * dist / (2.0 * std::sin(phi));
  const double tau = env.motion.tau;
  const int n = std::max(1, static_cast<int>(std::ceil(length / (p.v_nominal * tau))));
  if (n > steps_left) return std::nullopt;
  const Vec2 u(length / (n * tau), sweep / (n * tau));
  if (u.x() > p.v_max * 1.0001 || std::abs(u.y()) > p.w_max * 1.0001) return std::nullopt;
  Pose x = from;
  for (int k = 0; k < n; ++k) {
    x = motion_step(x, u, Vec2::Zero(), env.motion);
    if (!env.grid.contains(x.translation) || env.clearance(x.translation) < p.clearance) return std::nullopt;
  }
  return std::vector<Vec2>(static_cast<std::size_t>(n), u);
}

}  // namespace detail

/// Kinematically feasible, collision-free (at step resolution) controls from
/// start to the goal position. Tries a single arc first, then a goal-biased
/// RRT whose every new node also tries an arc to the goal.
inline std::vector<Vec2> init_trajectory(const Environment& env, const Pose& start, const Pose& goal,
                                         const InitParams& p = {}) {
  if ((start.translation - goal.translation).norm() < 1e-12 && std::abs(normalize_angle(start.theta - goal.theta)) < 1e-12) {
    return {};
  }
  if (!env.grid.contains(start.translation) || env.clearance(start.translation) < p.clearance) {
    throw InitializationFailed();
  }
  if (auto arc = detail::direct_arc(env, start, goal.translation, p, p.max_steps)) return *arc;

  struct Node {
    Pose pose;
    int parent;
    Vec2 u;
    int steps;  // along u from the parent
    int depth;  // total steps from the start
  };
  std::vector<Node> nodes{{start, -1, Vec2::Zero(), 0, 0}};
  Rng rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double x0 = env.grid.origin().x(), y0 = env.grid.origin().y();
  const double w = env.grid.width() * env.grid.resolution(), h = env.grid.height() * env.grid.resolution();

  auto path_to = [&](int idx, const std::vector<Vec2>& tail) {
    std::vector<Vec2> rev;
    for (int i = idx; nodes[static_cast<std::size_t>(i)].parent >= 0; i = nodes[static_cast<std::size_t>(i)].parent) {
      const Node& nd = nodes[static_cast<std::size_t>(i)];
      for (int k = 0; k < nd.steps; ++k) rev.push_back(nd.u);
    }
    std::vector<Vec2> out(rev.rbegin(), rev.rend());
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
  };

  while (static_cast<int>(nodes.size()) < p.node_budget) {
    const Vec2 target = unit(rng) < p.goal_bias ? goal.translation : Vec2(x0 + w * unit(rng), y0 + h * unit(rng));
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i].pose.translation - target).squaredNorm();
      if (d < best && nodes[i].depth + p.expansion_steps <= p.max_steps) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }
    const Node from = nodes[static_cast<std::size_t>(nearest)];
    if (from.depth + p.expansion_steps > p.max_steps) break;

    std::optional<Node> pick;
    double pick_dist = std::numeric_limits<double>::infinity();
    for (int s = 0; s < p.expansion_samples; ++s) {
      const Vec2 u(p.v_max * unit(rng), p.w_max * (2.0 * unit(rng) - 1.0));
      Pose x = from.pose;
      bool ok = true;
      for (int k = 0; k < p.expansion_steps && ok; ++k) {
        x = motion_step(x, u, Vec2::Zero(), env.motion);
        ok = env.grid.contains(x.translation) && env.clearance(x.translation) >= p.clearance;
      }
      if (!ok) continue;
      const double d = (x.translation - target).norm();
      if (d < pick_dist) {
        pick_dist = d;
        pick = Node{x, nearest, u, p.expansion_steps, from.depth + p.expansion_steps};
      }
    }
    if (!pick) continue;
    nodes.push_back(*pick);
    const int idx = static_cast<int>(nodes.size()) - 1;
    if ((pick->pose.translation - goal.translation).norm() < p.goal_tolerance) return path_to(idx, {});
    if (auto arc = detail::direct_arc(env, pick->pose, goal.translation, p, p.max_steps - pick->depth)) {
      return path_to(idx, *arc);
    }
  }
  throw InitializationFailed();
}

}  // namespace bsp
