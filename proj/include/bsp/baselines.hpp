#pragma once

// Method dispatch: the three belief-space variants of the ablation, the
// maximum-likelihood variant and the state-space iLQR baseline. Every method
// returns a policy over belief vectors so the harness treats them alike.

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "bsp/ilqg.hpp"
#include "bsp/planning.hpp"

namespace bsp {

enum class Method { Nilqg, Eilqg, Uilqg, Milqg, Ilqr };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::Nilqg: return "nilqg";
    case Method::Eilqg: return "eilqg";
    case Method::Uilqg: return "uilqg";
    case Method::Milqg: return "milqg";
    case Method::Ilqr: return "ilqr";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::Nilqg, Method::Eilqg, Method::Uilqg, Method::Milqg, Method::Ilqr}) {
    if (method_name(m) == s) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

/// Estimator the harness runs for a method's rollouts.
inline FilterKind rollout_filter(Method m) { return m == Method::Eilqg ? FilterKind::Ekf : FilterKind::Ukf; }

/// Effective optimizer settings for a method: N-iLQG starts at the caps and
/// M-iLQG drops the stochastic terms.
inline OptimizerConfig method_config(Method m, OptimizerConfig cfg) {
  if (m == Method::Nilqg) {
    cfg.schedule.mu0 = cfg.schedule.mu_max;
    cfg.schedule.nu0 = cfg.schedule.nu_max;
  }
  if (m == Method::Milqg) cfg.stochastic_terms = false;
  return cfg;
}

using BeliefTrajectory = Trajectory<9, 2>;
using BeliefPolicy = AffinePolicy<9, 2>;

struct PlanResult {
  BeliefPolicy policy;
  std::vector<ScheduleStage> stages;
  std::string note;

  int iterations() const {
    int n = 0;
    for (const auto& s : stages) n += s.report.iterations;
    return n;
  }
};

inline BeliefSpaceProblem belief_problem(const std::shared_ptr<const Environment>& env, FilterKind kind, double mu,
                                         double nu) {
  return BeliefSpaceProblem(env, kind, SigmoidNoise{mu, nu});
}

/// Belief-space outer loop shared by N-, E-, U- and M-iLQG.
inline PlanResult belief_space_solve(const std::shared_ptr<const Environment>& env, FilterKind kind,
                                     const BeliefVector& b0, const std::vector<Vec2>& controls,
                                     const OptimizerConfig& cfg, const IterationCallback& log = {}) {
  BeliefTrajectory init;
  init.states.push_back(b0);
  init.controls = controls;
  auto outer = ilqg_outer_loop([&](double mu, double nu) { return belief_problem(env, kind, mu, nu); }, init, cfg, log);
  return {std::move(outer.policy), std::move(outer.stages), std::move(outer.note)};
}

inline PlanResult milqg_solve(const std::shared_ptr<const Environment>& env, const BeliefVector& b0,
                              const std::vector<Vec2>& controls, const OptimizerConfig& cfg,
                              const IterationCallback& log = {}) {
  return belief_space_solve(env, FilterKind::Ukf, b0, controls, method_config(Method::Milqg, cfg), log);
}

/// Converts a pose policy into a belief policy that feeds back the belief
/// mean: gains [K 0], nominal beliefs from a noise-free UKF rollout at the
/// sensor caps.
inline BeliefPolicy lift_state_policy(const std::shared_ptr<const Environment>& env,
                                      const AffinePolicy<3, 2>& state_policy, const BeliefVector& b0,
                                      const SensorSchedule& schedule) {
  const BeliefSpaceProblem problem = belief_problem(env, FilterKind::Ukf, schedule.mu_max, schedule.nu_max);
  const int l = state_policy.horizon();
  BeliefPolicy out;
  out.nominal.states.push_back(b0);
  for (int t = 0; t < l; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const BeliefVector& b = out.nominal.states.back();
    const Vec3 dx = StateSpaceProblem::minus(b.head<3>(), state_policy.nominal.states[i]);
    const Vec2 u = state_policy.control(t, dx);
    out.nominal.controls.push_back(u);
    out.nominal.states.push_back(problem.step(b, u, Vec3::Zero()));
    Eigen::Matrix<double, 2, 9> k = Eigen::Matrix<double, 2, 9>::Zero();
    k.leftCols<3>() = state_policy.gains[i];
    out.gains.push_back(k);
    out.feedforward.push_back(Vec2::Zero());
  }
  return out;
}

inline PlanResult ilqr_solve(const std::shared_ptr<const Environment>& env, const BeliefVector& b0,
                             const std::vector<Vec2>& controls, const OptimizerConfig& cfg,
                             const IterationCallback& log = {}) {
  const StateSpaceProblem problem(env);
  const auto traj = rollout_controls(problem, Vec3(b0.head<3>()), controls);
  auto solved = ilqg_solve(problem, traj, cfg, log, 0.0, 0.0, 0);
  PlanResult out;
  out.policy = lift_state_policy(env, solved.policy, b0, cfg.schedule);
  out.stages.push_back({0.0, 0.0, solved.report});
  out.note = "state-space solve; clearance term at fixed sigma " + std::to_string(kStateSpaceSigma) +
             " m; rollouts feed back the UKF mean";
  return out;
}

inline PlanResult plan(Method m, const std::shared_ptr<const Environment>& env, const BeliefVector& b0,
                       const std::vector<Vec2>& controls, const OptimizerConfig& cfg,
                       const IterationCallback& log = {}) {
  const OptimizerConfig eff = method_config(m, cfg);
  switch (m) {
    case Method::Ilqr: return ilqr_solve(env, b0, controls, eff, log);
    case Method::Eilqg: return belief_space_solve(env, FilterKind::Ekf, b0, controls, eff, log);
    default: return belief_space_solve(env, FilterKind::Ukf, b0, controls, eff, log);
  }
}

}  // namespace bsp
