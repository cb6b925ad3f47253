#pragma once

// Stage/terminal costs on beliefs: goal attraction in the SE(2) x R^6 chart,
// control effort, a Gaussian clearance-probability bound and an
// inverse-distance term. Also the finite-difference quadratization the
// optimizer consumes.

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "bsp/belief.hpp"
#include "bsp/gridmap.hpp"
#include "bsp/lie_se2.hpp"

namespace bsp {

using Mat9 = Eigen::Matrix<double, 9, 9>;

struct CostParams {
  Mat9 q_stage = Mat9::Identity();
  Mat9 q_terminal = Mat9::Identity();
  Mat2 r = Mat2::Identity();
  double q_c = 100.0;  // clearance-probability weight
  double q_d = 1.0;    // inverse-distance weight
  BeliefVector goal = BeliefVector::Zero();

  static CostParams defaults(const BeliefVector& goal) {
    CostParams c;
    Eigen::Matrix<double, 9, 1> d;
    d << 10, 10, 1, 1, 1, 1, 1, 1, 1;
    c.q_stage = d.asDiagonal();
    c.q_terminal = 10.0 * c.q_stage;
    c.goal = goal;
    return c;
  }

  void validate() const {
    auto min_eig = [](const auto& m) {
      using M = std::decay_t<decltype(m)>;
      return Eigen::SelfAdjointEigenSolver<M>(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    };
    if (min_eig(q_stage) < -1e-12) throw std::invalid_argument("costs.q_stage must be PSD");
    if (min_eig(q_terminal) < -1e-12) throw std::invalid_argument("costs.q_terminal must be PSD");
    if (!(min_eig(r) > 0.0)) throw std::invalid_argument("costs.r must be PD");
    if (!(q_c >= 0.0) || !(q_d >= 0.0)) throw std::invalid_argument("costs.q_c and costs.q_d must be >= 0");
  }
};

/// Obstacle geometry the costs query: blocking cells for the Mahalanobis
/// search and the Euclidean distance field.
class ObstacleMap {
 public:
  ObstacleMap() = default;
  ObstacleMap(const OccupancyGrid& grid, bool unknown_as_occupied)
      : index_(grid, unknown_as_occupied), field_(build_distance_field(grid, unknown_as_occupied)),
        resolution_(grid.resolution()) {}

  const ObstacleIndex& index() const { return index_; }
  const DistanceField& field() const { return field_; }
  double resolution() const { return resolution_; }

  /// Interpolated Euclidean clearance at a position.
  double clearance(const Vec2& p) const { return field_.interpolate(p); }

 private:
  ObstacleIndex index_;
  DistanceField field_;
  double resolution_ = 1.0;
};

/// (log(mean_b^-1 * mean_goal), vech(L_goal) - vech(L_b)).
inline BeliefVector belief_error(const BeliefVector& b, const BeliefVector& goal) {
  BeliefVector e;
  e.head<3>() = between(Pose::from_vector(b.head<3>()), Pose::from_vector(goal.head<3>()));
  e.tail<6>() = goal.tail<6>() - b.tail<6>();
  return e;
}

inline constexpr double kMinClearanceSigma = 1e-3;

/// -log(1 - e^{-sigma^2/2}), i.e. minus the log of the regularized lower
/// incomplete gamma P(1, sigma^2/2). Capped below sigma = 1e-3.
inline double clearance_log_bound(double sigma) {
  if (std::isinf(sigma)) return 0.0;
  const double s = std::max(sigma, kMinClearanceSigma);
  const double x = 0.5 * s * s;
  if (x < 1.0) return -std::log(-std::expm1(-x));
  return -std::log1p(-std::exp(-x));
}

/// 2x2 position marginal of the belief covariance, regularized to PD.
inline Mat2 position_covariance(const BeliefVector& b) {
  const Mat3 l = unvech(b.tail<6>());
  const Mat3 cov = l * l.transpose();
  return repair_psd<2>(cov.topLeftCorner<2, 2>());
}

inline double collision_prob_cost(const BeliefVector& b, const ObstacleMap& map, double q_c) {
  if (q_c == 0.0) return 0.0;
  const double sigma = min_mahalanobis_to_occupied(map.index(), b.head<2>(), position_covariance(b));
  return q_c * clearance_log_bound(sigma);
}

/// Euclidean clearance floored at one cell so its inverse stays bounded.
inline double floored_clearance(const Vec2& p, const ObstacleMap& map) {
  return std::max(map.clearance(p), map.resolution());
}

inline double inverse_distance_cost(const BeliefVector& b, const ObstacleMap& map, double q_d) {
  if (q_d == 0.0) return 0.0;
  return q_d / floored_clearance(b.head<2>(), map);
}

inline double terminal_cost(const BeliefVector& b, const CostParams& p, const ObstacleMap& map) {
  const BeliefVector e = belief_error(b, p.goal);
  return e.dot(p.q_terminal * e) + collision_prob_cost(b, map, p.q_c) + inverse_distance_cost(b, map, p.q_d);
}

inline double stage_cost(const BeliefVector& b, const Vec2& u, const CostParams& p, const ObstacleMap& map) {
  const BeliefVector e = belief_error(b, p.goal);
  return e.dot(p.q_stage * e) + u.dot(p.r * u) + collision_prob_cost(b, map, p.q_c) +
         inverse_distance_cost(b, map, p.q_d);
}

// ---------------------------------------------------------------------------
// Quadratization

/// Second-order model c(b + db, u + du) ~ 1/2 [db du]^T [Q P^T; P R] [db du]
/// + q^T db + r^T du + p.
template <int NB, int NU>
struct QuadraticCost {
  Eigen::Matrix<double, NB, NB> Q = Eigen::Matrix<double, NB, NB>::Zero();
  Eigen::Matrix<double, NU, NU> R = Eigen::Matrix<double, NU, NU>::Zero();
  Eigen::Matrix<double, NU, NB> P = Eigen::Matrix<double, NU, NB>::Zero();
  Eigen::Matrix<double, NB, 1> q = Eigen::Matrix<double, NB, 1>::Zero();
  Eigen::Matrix<double, NU, 1> r = Eigen::Matrix<double, NU, 1>::Zero();
  double p = 0.0;

  double evaluate(const Eigen::Matrix<double, NB, 1>& db, const Eigen::Matrix<double, NU, 1>& du) const {
    return 0.5 * db.dot(Q * db) + 0.5 * du.dot(R * du) + du.dot(P * db) + q.dot(db) + r.dot(du) + p;
  }
};

struct QuadratizeSteps {
  double gradient = 1e-4;
  double hessian = 1e-3;
};

inline constexpr double kControlHessianFloor = 1e-9;

namespace detail {

template <int N>
Eigen::Matrix<double, N, N> clamp_eigenvalues(const Eigen::Matrix<double, N, N>& m, double floor) {
  using Mat = Eigen::Matrix<double, N, N>;
  if constexpr (N == 0) {
    return m;
  } else {
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    if (es.eigenvalues().minCoeff() >= floor) return sym;
    return es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() * es.eigenvectors().transpose();
  }
}

}  // namespace detail

/// Central-difference gradient and Hessian of `cost(db, du)` at zero
/// perturbation. Q is clamped to PSD and R to PD.
template <int NB, int NU, class Fn>
QuadraticCost<NB, NU> quadratize_cost(const Fn& cost, const QuadratizeSteps& steps = {}) {
  constexpr int N = NB + NU;
  using VecN = Eigen::Matrix<double, N, 1>;
  auto eval = [&](const VecN& z) {
    const double v = cost(Eigen::Matrix<double, NB, 1>(z.template head<NB>()),
                          Eigen::Matrix<double, NU, 1>(z.template tail<NU>()));
    if (!std::isfinite(v)) throw std::runtime_error("cost not finite at expansion point");
    return v;
  };

  const VecN zero = VecN::Zero();
  const double c0 = eval(zero);
  VecN grad;
  const double hg = steps.gradient;
  std::array<double, static_cast<std::size_t>(N)> plus{}, minus{};
  for (int i = 0; i < N; ++i) {
    VecN z = zero;
    z[i] = hg;
    const double fp = eval(z);
    z[i] = -hg;
    const double fm = eval(z);
    grad[i] = (fp - fm) / (2.0 * hg);
  }

  const double h = steps.hessian;
  Eigen::Matrix<double, N, N> hess;
  for (int i = 0; i < N; ++i) {
    VecN z = zero;
    z[i] = h;
    plus[static_cast<std::size_t>(i)] = eval(z);
    z[i] = -h;
    minus[static_cast<std::size_t>(i)] = eval(z);
    hess(i, i) = (plus[static_cast<std::size_t>(i)] - 2.0 * c0 + minus[static_cast<std::size_t>(i)]) / (h * h);
  }
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      VecN z = zero;
      z[i] = h;
      z[j] = h;
      const double fpp = eval(z);
      z[j] = -h;
      const double fpm = eval(z);
      z[i] = -h;
      const double fmm = eval(z);
      z[j] = h;
      const double fmp = eval(z);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }

  QuadraticCost<NB, NU> out;
  out.Q = detail::clamp_eigenvalues<NB>(hess.template topLeftCorner<NB, NB>(), 0.0);
  out.R = detail::clamp_eigenvalues<NU>(hess.template bottomRightCorner<NU, NU>(), kControlHessianFloor);
  out.P = hess.template bottomLeftCorner<NU, NB>();
  out.q = grad.template head<NB>();
  out.r = grad.template tail<NU>();
  out.p = c0;
  return out;
}

}  // namespace bsp
