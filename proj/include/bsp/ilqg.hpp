#pragma once

// iLQG over a generic discrete-time problem with stochastic dynamics
// x' = Phi(x, u, w), w ~ N(0, I), plus the sigmoid-schedule outer loop.
//
// A problem type P provides
//   static constexpr int kStateDim, kControlDim, kNoiseDim;   (kNoiseDim may be 0)
//   State step(const State&, const Control&, const Noise&) const;
//   double stage_cost(const State&, const Control&) const;
//   double terminal_cost(const State&) const;
//   static State plus(const State& x, const State& dx);      chart retraction
//   static State minus(const State& x, const State& ref);    chart coordinates of x at ref
// and optionally prepare(x, u) returning a callable of w alone, which lets
// the linearization reuse the expensive part of Phi across noise samples.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bsp/costs.hpp"
#include "bsp/models.hpp"

namespace bsp {

template <class P>
using StateOf = Eigen::Matrix<double, P::kStateDim, 1>;
template <class P>
using ControlOf = Eigen::Matrix<double, P::kControlDim, 1>;
template <class P>
using NoiseOf = Eigen::Matrix<double, P::kNoiseDim, 1>;

template <int NB, int NU>
struct Trajectory {
  std::vector<Eigen::Matrix<double, NB, 1>> states;    // l + 1
  std::vector<Eigen::Matrix<double, NU, 1>> controls;  // l

  int horizon() const { return static_cast<int>(controls.size()); }
};

template <int NB, int NU>
struct AffinePolicy {
  Trajectory<NB, NU> nominal;
  std::vector<Eigen::Matrix<double, NU, NB>> gains;
  std::vector<Eigen::Matrix<double, NU, 1>> feedforward;

  int horizon() const { return nominal.horizon(); }

  /// u_t = ubar_t + k_t + K_t * db, db already in chart coordinates.
  Eigen::Matrix<double, NU, 1> control(int t, const Eigen::Matrix<double, NB, 1>& db) const {
    const auto i = static_cast<std::size_t>(t);
    return nominal.controls[i] + feedforward[i] + gains[i] * db;
  }
};

template <int NB>
struct ValueModel {
  std::vector<Eigen::Matrix<double, NB, NB>> S;  // l + 1
  std::vector<Eigen::Matrix<double, NB, 1>> s;
  std::vector<double> s0;
};

template <int NB, int NU, int NW>
struct LinearizedStep {
  Eigen::Matrix<double, NB, NB> F;
  Eigen::Matrix<double, NB, NU> G;
  Eigen::Matrix<double, NB, NW> W;
  std::array<Eigen::Matrix<double, NB, NB>, static_cast<std::size_t>(NW)> Fi;
  std::array<Eigen::Matrix<double, NB, NU>, static_cast<std::size_t>(NW)> Gi;
};

struct OptimizerConfig {
  int max_iterations = 200;
  double abs_tol = 1e-3;
  double rel_tol = 1e-4;
  int tol_window = 3;
  double rho_init = 1e-6;
  double rho_scale = 10.0;
  double rho_min = 1e-9;
  double rho_max = 1e9;
  double shrink = 0.5;
  double min_step = 1.0 / 1024.0;
  double fd_state = 1e-4;
  double fd_control = 1e-4;
  double fd_noise = 1e-3;
  QuadratizeSteps cost_steps;
  bool stochastic_terms = true;  // false drops e^i, F^i, G^i (maximum-likelihood planning)
  int jobs = 1;
  SensorSchedule schedule;
  bool schedule_until_both_caps = false;

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("optimizer.max_iterations must be >= 1");
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw std::invalid_argument("optimizer tolerances must be positive");
    if (tol_window < 1) throw std::invalid_argument("optimizer.tol_window must be >= 1");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("optimizer.shrink must be in (0, 1)");
    if (!(min_step > 0.0 && min_step <= 1.0)) throw std::invalid_argument("optimizer.min_step must be in (0, 1]");
    if (!(rho_scale > 1.0) || !(rho_min > 0.0) || !(rho_min <= rho_init && rho_init <= rho_max)) {
      throw std::invalid_argument("optimizer damping bounds are inconsistent");
    }
    if (!(fd_state > 0.0) || !(fd_control > 0.0) || !(fd_noise > 0.0)) {
      throw std::invalid_argument("optimizer finite-difference steps must be positive");
    }
    if (jobs < 1) throw std::invalid_argument("optimizer.jobs must be >= 1");
    schedule.validate();
  }
};

struct IterationLog {
  int outer_iter = 0;
  int inner_iter = 0;
  double mu = 0.0;
  double nu = 0.0;
  double rho = 0.0;
  double eps = 0.0;
  double nominal_cost = 0.0;
  double expected_cost = 0.0;
  bool accepted = false;
};

using IterationCallback = std::function<void(const IterationLog&)>;

struct SolveReport {
  int iterations = 0;  // accepted iterations
  bool converged = false;
  std::string reason;
  std::vector<double> cost_trace;  // initial cost, then one entry per accepted iteration
  double final_rho = 0.0;
  double expected_cost = 0.0;  // nominal cost plus the noise terms of the final backward pass
};

class InfeasibleInitialization : public std::runtime_error {
 public:
  InfeasibleInitialization() : std::runtime_error("infeasible initialization") {}
};

namespace detail {

template <class P>
concept HasPrepare = requires(const P& p, const StateOf<P>& b, const ControlOf<P>& u) { p.prepare(b, u); };

/// Runs f(t) for t in [0, n) on up to `jobs` threads. Each index is written
/// by exactly one thread, so results do not depend on scheduling.
template <class Fn>
void parallel_for(int n, int jobs, const Fn& f) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int t = 0; t < n; ++t) f(t);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    threads.emplace_back([&, j] {
      try {
        for (int t = j; t < n; t += jobs) f(t);
      } catch (...) {
        errors[static_cast<std::size_t>(j)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <int N>
void require_finite(const Eigen::Matrix<double, N, 1>& v, const char* what, int coord) {
  if (!v.allFinite()) {
    throw std::runtime_error(std::string("non-finite dynamics sample while differentiating ") + what +
                             " coordinate " + std::to_string(coord));
  }
}

}  // namespace detail

/// Central finite differences of Phi at (b, u, 0). All differences are taken
/// in the chart at Phi(b, u, 0).
template <class P>
LinearizedStep<P::kStateDim, P::kControlDim, P::kNoiseDim> linearize_dynamics(const P& problem, const StateOf<P>& b,
                                                                             const ControlOf<P>& u,
                                                                             const OptimizerConfig& cfg) {
  constexpr int NB = P::kStateDim, NU = P::kControlDim, NW = P::kNoiseDim;
  using State = StateOf<P>;
  using Noise = NoiseOf<P>;
  using WMat = Eigen::Matrix<double, NB, NW>;

  auto prepared = [&](const State& bb, const ControlOf<P>& uu) {
    if constexpr (detail::HasPrepare<P>) {
      return problem.prepare(bb, uu);
    } else {
      return [&problem, bb, uu](const Noise& w) { return problem.step(bb, uu, w); };
    }
  };

  const auto nominal_step = prepared(b, u);
  const State phi0 = nominal_step(Noise::Zero());
  detail::require_finite<NB>(phi0, "nominal", 0);

  // Output of one prepared step: chart value at w = 0 and the noise Jacobian.
  auto sample = [&](const auto& step, State& value, WMat& w_jac) {
    value = P::minus(step(Noise::Zero()), phi0);
    if constexpr (NW > 0) {
      const double hw = cfg.fd_noise;
      for (int i = 0; i < NW; ++i) {
        Noise w = Noise::Zero();
        w[i] = hw;
        const State plus = P::minus(step(w), phi0);
        w[i] = -hw;
        const State minus = P::minus(step(w), phi0);
        w_jac.col(i) = (plus - minus) / (2.0 * hw);
      }
    }
  };

  LinearizedStep<NB, NU, NW> out;
  {
    State v;
    sample(nominal_step, v, out.W);
  }
  for (int i = 0; i < NW; ++i) {
    out.Fi[static_cast<std::size_t>(i)].setZero();
    out.Gi[static_cast<std::size_t>(i)].setZero();
  }

  State vp, vm;
  WMat wp, wm;
  const double hb = cfg.fd_state;
  for (int j = 0; j < NB; ++j) {
    State d = State::Zero();
    d[j] = hb;
    sample(prepared(P::plus(b, d), u), vp, wp);
    sample(prepared(P::plus(b, State(-d)), u), vm, wm);
    detail::require_finite<NB>(vp, "state", j);
    detail::require_finite<NB>(vm, "state", j);
    out.F.col(j) = (vp - vm) / (2.0 * hb);
    if constexpr (NW > 0) {
      for (int i = 0; i < NW; ++i) {
        out.Fi[static_cast<std::size_t>(i)].col(j) = (wp.col(i) - wm.col(i)) / (2.0 * hb);
      }
    }
  }
  const double hu = cfg.fd_control;
  for (int j = 0; j < NU; ++j) {
    ControlOf<P> d = ControlOf<P>::Zero();
    d[j] = hu;
    sample(prepared(b, ControlOf<P>(u + d)), vp, wp);
    sample(prepared(b, ControlOf<P>(u - d)), vm, wm);
    detail::require_finite<NB>(vp, "control", j);
    detail::require_finite<NB>(vm, "control", j);
    out.G.col(j) = (vp - vm) / (2.0 * hu);
    if constexpr (NW > 0) {
      for (int i = 0; i < NW; ++i) {
        out.Gi[static_cast<std::size_t>(i)].col(j) = (wp.col(i) - wm.col(i)) / (2.0 * hu);
      }
    }
  }
  return out;
}

template <class P>
QuadraticCost<P::kStateDim, P::kControlDim> quadratize_stage(const P& problem, const StateOf<P>& b,
                                                             const ControlOf<P>& u, const QuadratizeSteps& steps) {
  constexpr int NB = P::kStateDim, NU = P::kControlDim;
  return quadratize_cost<NB, NU>(
      [&](const Eigen::Matrix<double, NB, 1>& db, const Eigen::Matrix<double, NU, 1>& du) {
        return problem.stage_cost(P::plus(b, db), ControlOf<P>(u + du));
      },
      steps);
}

template <class P>
QuadraticCost<P::kStateDim, 0> quadratize_terminal(const P& problem, const StateOf<P>& b,
                                                   const QuadratizeSteps& steps) {
  constexpr int NB = P::kStateDim;
  return quadratize_cost<NB, 0>(
      [&](const Eigen::Matrix<double, NB, 1>& db, const Eigen::Matrix<double, 0, 1>&) {
        return problem.terminal_cost(P::plus(b, db));
      },
      steps);
}

/// Everything the backward pass needs about one nominal trajectory.
template <int NB, int NU, int NW>
struct LocalModel {
  std::vector<LinearizedStep<NB, NU, NW>> dynamics;
  std::vector<QuadraticCost<NB, NU>> stage;
  QuadraticCost<NB, 0> terminal;
};

template <class P>
LocalModel<P::kStateDim, P::kControlDim, P::kNoiseDim> build_local_model(
    const P& problem, const Trajectory<P::kStateDim, P::kControlDim>& traj, const OptimizerConfig& cfg) {
  const int l = traj.horizon();
  LocalModel<P::kStateDim, P::kControlDim, P::kNoiseDim> m;
  m.dynamics.resize(static_cast<std::size_t>(l));
  m.stage.resize(static_cast<std::size_t>(l));
  detail::parallel_for(l, cfg.jobs, [&](int t) {
    const auto i = static_cast<std::size_t>(t);
    m.dynamics[i] = linearize_dynamics(problem, traj.states[i], traj.controls[i], cfg);
    m.stage[i] = quadratize_stage(problem, traj.states[i], traj.controls[i], cfg.cost_steps);
  });
  m.terminal = quadratize_terminal(problem, traj.states.back(), cfg.cost_steps);
  return m;
}

template <int NB, int NU>
struct BackwardResult {
  bool ok = false;
  std::vector<Eigen::Matrix<double, NU, NB>> K;
  std::vector<Eigen::Matrix<double, NU, 1>> k;
  ValueModel<NB> value;
  double expected_reduction = 0.0;  // predicted decrease of the nominal cost for a full step
  double noise_cost = 0.0;          // sum over t of 1/2 sum_i e^i' S e^i
};

/// Quadratic value recursion. Gains use D + rho I; the value update is the
/// form that stays consistent with the damped gains.
template <int NB, int NU, int NW>
BackwardResult<NB, NU> backward_pass(const LocalModel<NB, NU, NW>& m, double rho, bool stochastic_terms) {
  using MatB = Eigen::Matrix<double, NB, NB>;
  using VecB = Eigen::Matrix<double, NB, 1>;
  using MatU = Eigen::Matrix<double, NU, NU>;
  using VecU = Eigen::Matrix<double, NU, 1>;
  using MatUB = Eigen::Matrix<double, NU, NB>;

  const int l = static_cast<int>(m.stage.size());
  BackwardResult<NB, NU> out;
  out.K.resize(static_cast<std::size_t>(l));
  out.k.resize(static_cast<std::size_t>(l));
  out.value.S.resize(static_cast<std::size_t>(l + 1));
  out.value.s.resize(static_cast<std::size_t>(l + 1));
  out.value.s0.resize(static_cast<std::size_t>(l + 1));

  MatB S = m.terminal.Q;
  VecB s = m.terminal.q;
  double s0 = m.terminal.p;
  out.value.S.back() = S;
  out.value.s.back() = s;
  out.value.s0.back() = s0;

  for (int t = l - 1; t >= 0; --t) {
    const auto i = static_cast<std::size_t>(t);
    const auto& dyn = m.dynamics[i];
    const auto& c = m.stage[i];

    MatB C = c.Q + dyn.F.transpose() * S * dyn.F;
    MatU D = c.R + dyn.G.transpose() * S * dyn.G;
    MatUB E = c.P + dyn.G.transpose() * S * dyn.F;
    VecB cv = c.q + dyn.F.transpose() * s;
    VecU dv = c.r + dyn.G.transpose() * s;
    double e = c.p + s0;
    if constexpr (NW > 0) {
      for (int j = 0; stochastic_terms && j < NW; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const VecB ej = dyn.W.col(j);
        const VecB Sej = S * ej;
        C += dyn.Fi[ju].transpose() * S * dyn.Fi[ju];
        D += dyn.Gi[ju].transpose() * S * dyn.Gi[ju];
        E += dyn.Gi[ju].transpose() * S * dyn.Fi[ju];
        cv += dyn.Fi[ju].transpose() * Sej;
        dv += dyn.Gi[ju].transpose() * Sej;
        const double half = 0.5 * ej.dot(Sej);
        e += half;
        out.noise_cost += half;
      }
    }
    D = 0.5 * (D + D.transpose());

    const MatU Dreg = D + rho * MatU::Identity();
    Eigen::LLT<MatU> llt(Dreg);
    if (llt.info() != Eigen::Success) return out;
    const MatUB K = -llt.solve(E);
    const VecU k = -llt.solve(dv);
    if (!K.allFinite() || !k.allFinite()) return out;

    S = C + K.transpose() * D * K + K.transpose() * E + E.transpose() * K;
    S = 0.5 * (S + S.transpose());
    s = cv + K.transpose() * D * k + K.transpose() * dv + E.transpose() * k;
    s0 = e + 0.5 * k.dot(D * k) + dv.dot(k);
    out.expected_reduction -= 0.5 * k.dot(D * k) + dv.dot(k);

    out.K[i] = K;
    out.k[i] = k;
    out.value.S[i] = S;
    out.value.s[i] = s;
    out.value.s0[i] = s0;
  }
  out.ok = true;
  return out;
}

template <class P>
double trajectory_cost(const P& problem, const Trajectory<P::kStateDim, P::kControlDim>& traj) {
  double j = 0.0;
  for (int t = 0; t < traj.horizon(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    j += problem.stage_cost(traj.states[i], traj.controls[i]);
  }
  return j + problem.terminal_cost(traj.states.back());
}

/// Noise-free rollout of a control sequence.
template <class P>
Trajectory<P::kStateDim, P::kControlDim> rollout_controls(const P& problem, const StateOf<P>& b0,
                                                        const std::vector<ControlOf<P>>& controls) {
  Trajectory<P::kStateDim, P::kControlDim> traj;
  traj.controls = controls;
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(b0);
  for (const auto& u : controls) traj.states.push_back(problem.step(traj.states.back(), u, NoiseOf<P>::Zero()));
  return traj;
}

struct ForwardResult {
  bool ok = false;
  double cost = std::numeric_limits<double>::infinity();
};

/// Noise-free rollout of u_t = ubar_t + eps k_t + K_t (b_t - bbar_t). A
/// non-finite state or cost, or any model exception, rejects the candidate.
template <class P>
ForwardResult forward_pass(const P& problem, const Trajectory<P::kStateDim, P::kControlDim>& nominal,
                           const std::vector<Eigen::Matrix<double, P::kControlDim, P::kStateDim>>& K,
                           const std::vector<ControlOf<P>>& k, double eps,
                           Trajectory<P::kStateDim, P::kControlDim>& out) {
  ForwardResult r;
  const int l = nominal.horizon();
  out.states.assign(static_cast<std::size_t>(l + 1), StateOf<P>::Zero());
  out.controls.assign(static_cast<std::size_t>(l), ControlOf<P>::Zero());
  out.states[0] = nominal.states[0];
  double j = 0.0;
  try {
    for (int t = 0; t < l; ++t) {
      const auto i = static_cast<std::size_t>(t);
      const StateOf<P> db = P::minus(out.states[i], nominal.states[i]);
      const ControlOf<P> u = nominal.controls[i] + eps * k[i] + K[i] * db;
      out.controls[i] = u;
      out.states[i + 1] = problem.step(out.states[i], u, NoiseOf<P>::Zero());
      if (!out.states[i + 1].allFinite() || !u.allFinite()) return r;
      j += problem.stage_cost(out.states[i], u);
    }
    j += problem.terminal_cost(out.states.back());
  } catch (const std::exception&) {
    return r;
  }
  if (!std::isfinite(j)) return r;
  r.ok = true;
  r.cost = j;
  return r;
}

template <int NB, int NU>
struct SolveResult {
  AffinePolicy<NB, NU> policy;
  ValueModel<NB> value;
  SolveReport report;
};

/// iLQG with line search and Levenberg-Marquardt damping. The returned
/// policy's nominal already contains the accepted feedforward steps, so its
/// feedforward is zero and its noise-free rollout reproduces the nominal.
template <class P>
SolveResult<P::kStateDim, P::kControlDim> ilqg_solve(const P& problem, Trajectory<P::kStateDim, P::kControlDim> traj,
                                                     const OptimizerConfig& cfg, const IterationCallback& log = {},
                                                     double mu = 0.0, double nu = 0.0, int outer_iter = 0) {
  constexpr int NB = P::kStateDim, NU = P::kControlDim;
  if (traj.states.size() != traj.controls.size() + 1) throw std::invalid_argument("trajectory horizon mismatch");

  SolveResult<NB, NU> result;
  SolveReport& rep = result.report;
  double cost;
  try {
    cost = trajectory_cost(problem, traj);
  } catch (const std::exception&) {
    throw InfeasibleInitialization();
  }
  if (!std::isfinite(cost)) throw InfeasibleInitialization();
  rep.cost_trace.push_back(cost);

  double rho = cfg.rho_init;
  int small_steps = 0;
  Trajectory<NB, NU> candidate;
  const int l = traj.horizon();

  while (l > 0 && rep.iterations < cfg.max_iterations && !rep.converged && rep.reason.empty()) {
    const auto local = build_local_model(problem, traj, cfg);
    bool accepted = false;
    while (!accepted) {
      const auto bp = backward_pass(local, rho, cfg.stochastic_terms);
      if (!bp.ok) {
        if (rho >= cfg.rho_max) {
          rep.reason = "damping limit reached";
          break;
        }
        rho = std::min(rho * cfg.rho_scale, cfg.rho_max);
        continue;
      }
      if (bp.expected_reduction <= 1e-12 * (1.0 + std::abs(cost))) {
        rep.converged = true;
        rep.reason = "no predicted improvement";
        break;
      }
      for (double eps = 1.0; eps >= cfg.min_step * (1.0 - 1e-12); eps *= cfg.shrink) {
        const ForwardResult fr = forward_pass(problem, traj, bp.K, bp.k, eps, candidate);
        const bool take = fr.ok && fr.cost < cost;
        if (log) {
          log({outer_iter, rep.iterations, mu, nu, rho, eps, fr.cost, fr.cost + bp.noise_cost, take});
        }
        if (take) {
          const double drop = cost - fr.cost;
          std::swap(traj, candidate);
          cost = fr.cost;
          accepted = true;
          ++rep.iterations;
          rep.cost_trace.push_back(cost);
          rho = std::max(rho / cfg.rho_scale, cfg.rho_min);
          small_steps = (drop < cfg.abs_tol || drop < cfg.rel_tol * std::abs(cost + drop)) ? small_steps + 1 : 0;
          if (small_steps >= cfg.tol_window) {
            rep.converged = true;
            rep.reason = "tolerance";
          }
          break;
        }
      }
      if (!accepted) {
        if (rho >= cfg.rho_max) {
          rep.reason = "line search failed at damping limit";
          break;
        }
        rho = std::min(rho * cfg.rho_scale, cfg.rho_max);
      }
    }
  }
  if (rep.reason.empty()) rep.reason = l == 0 ? "empty horizon" : "iteration cap";
  rep.final_rho = rho;

  // Feedback gains and value model at the final nominal, with as little
  // damping as the local model allows.
  result.policy.nominal = traj;
  result.policy.feedforward.assign(static_cast<std::size_t>(l), ControlOf<P>::Zero());
  result.policy.gains.assign(static_cast<std::size_t>(l), Eigen::Matrix<double, NU, NB>::Zero());
  rep.expected_cost = cost;
  if (l > 0) {
    const auto local = build_local_model(problem, traj, cfg);
    for (double r = cfg.rho_min;; r = std::min(r * cfg.rho_scale, cfg.rho_max)) {
      auto bp = backward_pass(local, r, cfg.stochastic_terms);
      if (bp.ok) {
        result.policy.gains = std::move(bp.K);
        result.value = std::move(bp.value);
        rep.expected_cost = cost + bp.noise_cost;
        break;
      }
      if (r >= cfg.rho_max) break;
    }
  }
  return result;
}

/// Re-rolls a policy's nominal under another model: u = ubar + k + K (b - bbar).
template <class P>
Trajectory<P::kStateDim, P::kControlDim> rollout_policy(const P& problem,
                                                       const AffinePolicy<P::kStateDim, P::kControlDim>& policy) {
  Trajectory<P::kStateDim, P::kControlDim> traj;
  const int l = policy.horizon();
  traj.states.push_back(policy.nominal.states.front());
  for (int t = 0; t < l; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const auto u = policy.control(t, P::minus(traj.states.back(), policy.nominal.states[i]));
    traj.controls.push_back(u);
    traj.states.push_back(problem.step(traj.states.back(), u, NoiseOf<P>::Zero()));
  }
  return traj;
}

struct ScheduleStage {
  double mu = 0.0;
  double nu = 0.0;
  SolveReport report;
};

template <int NB, int NU>
struct OuterResult {
  AffinePolicy<NB, NU> policy;
  ValueModel<NB> value;
  std::vector<ScheduleStage> stages;
  std::string note;

  int total_iterations() const {
    int n = 0;
    for (const auto& s : stages) n += s.report.iterations;
    return n;
  }
};

/// (mu, nu) values of every inner solve. Default: grow both while both are
/// below their caps, then one final solve at the caps. With
/// `until_both_caps`, the parameter that reaches its cap first is held there
/// while the other keeps growing.
inline std::vector<std::pair<double, double>> schedule_sequence(const SensorSchedule& s, bool until_both_caps) {
  std::vector<std::pair<double, double>> seq;
  double mu = s.mu0, nu = s.nu0;
  auto running = [&] { return until_both_caps ? (mu < s.mu_max || nu < s.nu_max) : (mu < s.mu_max && nu < s.nu_max); };
  while (running()) {
    seq.emplace_back(std::min(mu, s.mu_max), std::min(nu, s.nu_max));
    mu *= s.lambda_mu;
    nu *= s.lambda_nu;
  }
  seq.emplace_back(s.mu_max, s.nu_max);
  return seq;
}

/// Continuation over the noise schedule. `make_problem(mu, nu)` builds the problem with the sigmoid noise
/// scale at (mu, nu).
template <class Factory>
auto ilqg_outer_loop(const Factory& make_problem,
                     const Trajectory<std::decay_t<decltype(make_problem(0.0, 0.0))>::kStateDim,
                                      std::decay_t<decltype(make_problem(0.0, 0.0))>::kControlDim>& initial,
                     const OptimizerConfig& cfg, const IterationCallback& log = {}) {
  using P = std::decay_t<decltype(make_problem(0.0, 0.0))>;
  constexpr int NB = P::kStateDim, NU = P::kControlDim;
  OuterResult<NB, NU> out;
  const auto seq = schedule_sequence(cfg.schedule, cfg.schedule_until_both_caps);
  out.note = cfg.schedule_until_both_caps ? "grew each parameter until its own cap; final solve at caps"
                                          : "grew both parameters until either reached its cap; final solve at caps";

  Trajectory<NB, NU> traj;
  {
    const P first = make_problem(seq.front().first, seq.front().second);
    traj = rollout_controls(first, initial.states.front(), initial.controls);
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto [mu, nu] = seq[i];
    const P problem = make_problem(mu, nu);
    auto solved = ilqg_solve(problem, traj, cfg, log, mu, nu, static_cast<int>(i));
    out.stages.push_back({mu, nu, solved.report});
    if (i + 1 == seq.size()) {
      out.policy = std::move(solved.policy);
      out.value = std::move(solved.value);
    } else {
      const P next = make_problem(seq[i + 1].first, seq[i + 1].second);
      traj = rollout_policy(next, solved.policy);
    }
  }
  return out;
}

}  // namespace bsp
