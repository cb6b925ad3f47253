#pragma once

// Concrete planning problems on a map: belief-space (UKF or EKF dynamics)
// and state-space (for the iLQR baseline), sharing one Environment.

#include <memory>
#include <stdexcept>

#include <Eigen/Core>

#include "bsp/belief.hpp"
#include "bsp/costs.hpp"
#include "bsp/gridmap.hpp"
#include "bsp/ilqg.hpp"
#include "bsp/lie_se2.hpp"
#include "bsp/models.hpp"

namespace bsp {

/// Everything shared read-only by planners and rollouts. Sensors keep a
/// pointer to `grid`, so an Environment must not move once problems exist;
/// hold it through make_environment's shared_ptr.
///
/// Costs see the obstacles grown by the robot radius (the robot is planned
/// as a point in that map); collision checks use the true clearance.
struct Environment {
  OccupancyGrid grid;
  DistanceField field;
  ObstacleMap obstacles;
  MotionParams motion;
  SensorParams sensor;  // noise model is overridden per problem
  UkfParams ukf;
  CostParams costs;
  double robot_radius = 0.2;
  bool unknown_as_occupied = true;

  Environment(OccupancyGrid g, MotionParams m, SensorParams s, UkfParams u, CostParams c, double radius = 0.2,
              bool unknown_occupied = true)
      : grid(std::move(g)), field(build_distance_field(grid, unknown_occupied)),
        obstacles(inflate(grid, radius, unknown_occupied), unknown_occupied), motion(m), sensor(std::move(s)), ukf(u),
        costs(std::move(c)), robot_radius(radius), unknown_as_occupied(unknown_occupied) {
    motion.validate();
    sensor.validate();
    costs.validate();
    if (!(robot_radius >= 0.0)) throw std::invalid_argument("robot radius must be >= 0");
  }

  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  /// Euclidean clearance of the true robot center.
  double clearance(const Vec2& p) const { return field.interpolate(p); }
  bool collides(const Pose& x) const { return !grid.contains(x.translation) || clearance(x.translation) < robot_radius; }

  SensorParams sensor_with(NoiseScaleModel noise) const {
    SensorParams s = sensor;
    s.noise = noise;
    return s;
  }
};

template <class... Args>
std::shared_ptr<const Environment> make_environment(Args&&... args) {
  return std::make_shared<const Environment>(std::forward<Args>(args)...);
}

// SE(2) x R^6 chart on belief vectors.
inline BeliefVector belief_plus(const BeliefVector& b, const BeliefVector& d) {
  BeliefVector out;
  out.head<3>() = retract(Pose::from_vector(b.head<3>()), d.head<3>()).vector();
  out.tail<6>() = b.tail<6>() + d.tail<6>();
  return out;
}

inline BeliefVector belief_minus(const BeliefVector& b, const BeliefVector& ref) {
  BeliefVector out;
  out.head<3>() = between(Pose::from_vector(ref.head<3>()), Pose::from_vector(b.head<3>()));
  out.tail<6>() = b.tail<6>() - ref.tail<6>();
  return out;
}

using RangeBeliefDynamics = BeliefDynamics<SE2Group, UnicycleMotion, RangeSensor>;

class BeliefSpaceProblem {
 public:
  static constexpr int kStateDim = 9;
  static constexpr int kControlDim = 2;
  static constexpr int kNoiseDim = 3;
  using State = BeliefVector;

  BeliefSpaceProblem(std::shared_ptr<const Environment> env, FilterKind kind, NoiseScaleModel noise)
      : env_(std::move(env)),
        dynamics_(UnicycleMotion{env_->motion}, RangeSensor(env_->grid, env_->sensor_with(noise)), kind, env_->ukf) {}

  const Environment& env() const { return *env_; }
  const RangeBeliefDynamics& dynamics() const { return dynamics_; }

  PreparedBeliefStep<SE2Group> prepare(const State& b, const Vec2& u) const { return dynamics_.prepare(b, u); }
  State step(const State& b, const Vec2& u, const Vec3& w) const { return dynamics_(b, u, w); }

  double stage_cost(const State& b, const Vec2& u) const { return bsp::stage_cost(b, u, env_->costs, env_->obstacles); }
  double terminal_cost(const State& b) const { return bsp::terminal_cost(b, env_->costs, env_->obstacles); }

  static State plus(const State& b, const State& d) { return belief_plus(b, d); }
  static State minus(const State& b, const State& ref) { return belief_minus(b, ref); }

 private:
  std::shared_ptr<const Environment> env_;
  RangeBeliefDynamics dynamics_;
};

/// Nominal clearance std used by the state-space obstacle term.
inline constexpr double kStateSpaceSigma = 0.3;

/// Deterministic motion on the pose alone. The costs are the pose block of
/// the belief costs, with the clearance probability evaluated at a fixed
/// isotropic position std.
class StateSpaceProblem {
 public:
  static constexpr int kStateDim = 3;
  static constexpr int kControlDim = 2;
  static constexpr int kNoiseDim = 0;
  using State = Vec3;

  explicit StateSpaceProblem(std::shared_ptr<const Environment> env, double sigma0 = kStateSpaceSigma)
      : env_(std::move(env)), sigma0_(sigma0) {}

  const Environment& env() const { return *env_; }

  State step(const State& x, const Vec2& u, const Eigen::Matrix<double, 0, 1>&) const {
    return motion_step(Pose::from_vector(x), u, Vec2::Zero(), env_->motion).vector();
  }

  double obstacle_cost(const State& x) const {
    const CostParams& c = env_->costs;
    double j = 0.0;
    if (c.q_c != 0.0) {
      const Mat2 cov = sigma0_ * sigma0_ * Mat2::Identity();
      j += c.q_c * clearance_log_bound(min_mahalanobis_to_occupied(env_->obstacles.index(), x.head<2>(), cov));
    }
    if (c.q_d != 0.0) j += c.q_d / floored_clearance(x.head<2>(), env_->obstacles);
    return j;
  }

  double pose_cost(const State& x, const Mat9& q) const {
    const Vec3 e = between(Pose::from_vector(x), Pose::from_vector(env_->costs.goal.head<3>()));
    return e.dot(q.topLeftCorner<3, 3>() * e);
  }

  double stage_cost(const State& x, const Vec2& u) const {
    return pose_cost(x, env_->costs.q_stage) + u.dot(env_->costs.r * u) + obstacle_cost(x);
  }
  double terminal_cost(const State& x) const { return pose_cost(x, env_->costs.q_terminal) + obstacle_cost(x); }

  static State plus(const State& x, const State& d) { return retract(Pose::from_vector(x), d).vector(); }
  static State minus(const State& x, const State& ref) {
    return between(Pose::from_vector(ref), Pose::from_vector(x));
  }

 private:
  std::shared_ptr<const Environment> env_;
  double sigma0_;
};

}  // namespace bsp
