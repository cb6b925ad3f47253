#pragma once

// The concrete system: velocity-controlled SE(2) motion and an m-beam range
// sensor whose noise scale is either the true step (approximated by a steep
// sigmoid) or a scheduled sigmoid.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "bsp/gridmap.hpp"
#include "bsp/lie_se2.hpp"

namespace bsp {

struct MotionParams {
  double tau = 0.1;      // s per step
  double sigma_v = 0.5;  // m/s, std of linear-velocity noise
  double sigma_w = 0.05; // rad/s, std of angular-velocity noise

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("motion.tau must be positive");
    if (!(sigma_v >= 0.0) || !(sigma_w >= 0.0)) throw std::invalid_argument("motion noise std must be >= 0");
  }

  /// Sigma_m = diag(sigma_v^2, sigma_w^2).
  Mat2 noise_cov() const { return Vec2(sigma_v * sigma_v, sigma_w * sigma_w).asDiagonal(); }
};

/// x * exp(B (u + m) tau), B mapping (v, w) to the twist (v, 0, w).
inline Pose motion_step(const Pose& x, const Vec2& u, const Vec2& m, const MotionParams& p) {
  const Vec2 c = u + m;
  return compose(x, exp(Twist(c.x() * p.tau, 0.0, c.y() * p.tau)));
}

// ---------------------------------------------------------------------------
// Noise scale

struct StepNoise {};
struct SigmoidNoise {
  double mu = 10.0;
  double nu = 5.0;
};
using NoiseScaleModel = std::variant<StepNoise, SigmoidNoise>;

struct SensorParams {
  std::vector<double> beam_angles;
  double r_max = 2.0;    // maximum sensing range r_m
  double sigma_n = 0.5;  // in-range noise std
  NoiseScaleModel noise = StepNoise{};
  // Sigmoid parameters that stand in for the step's infinite branch.
  double step_mu = 1e3;
  double step_nu = 1e3;
  // Planner ray-cast horizon as a multiple of r_max.
  double cast_range_factor = 4.0;
  bool unknown_blocks_rays = false;

  static std::vector<double> default_beams() {
    constexpr double q = 0.25 * 3.14159265358979323846;
    return {-2 * q, -q, 0.0, q, 2 * q};
  }

  double cast_range() const { return cast_range_factor * r_max; }
  int beams() const { return static_cast<int>(beam_angles.size()); }

  void validate() const {
    if (beam_angles.empty()) throw std::invalid_argument("sensor needs at least one beam");
    if (!(r_max > 0.0)) throw std::invalid_argument("sensor.r_max must be positive");
    if (!(sigma_n > 0.0)) throw std::invalid_argument("sensor.sigma_n must be positive");
    if (!(cast_range_factor >= 1.0)) throw std::invalid_argument("sensor.cast_range_factor must be >= 1");
    if (const auto* s = std::get_if<SigmoidNoise>(&noise)) {
      if (!(s->mu >= 0.0) || !(s->nu > 0.0)) throw std::invalid_argument("sigmoid needs mu >= 0 and nu > 0");
    }
  }
};

struct SensorSchedule {
  double mu0 = 10.0;
  double nu0 = 5.0;
  double lambda_mu = 2.0;
  double lambda_nu = 2.0;
  double mu_max = 1e3;
  double nu_max = 1e3;

  void validate() const {
    if (!(lambda_mu > 1.0) || !(lambda_nu > 1.0)) throw std::invalid_argument("schedule growth factors must be > 1");
    if (!(mu0 <= mu_max) || !(nu0 <= nu_max)) throw std::invalid_argument("schedule start exceeds its cap");
    if (!(mu0 >= 0.0) || !(nu0 > 0.0)) throw std::invalid_argument("schedule needs mu0 >= 0 and nu0 > 0");
  }
};

/// mu / (1 + e^{-nu (r - r_m)}) + sigma_n, exponent clamped to [-500, 500].
inline double noise_scale_sigmoid(double r, double mu, double nu, const SensorParams& p) {
  const double e = std::clamp(-nu * (r - p.r_max), -500.0, 500.0);
  return mu / (1.0 + std::exp(e)) + p.sigma_n;
}

/// sigma_n inside the sensing range, the cap-parameter sigmoid beyond it.
inline double noise_scale_step(double r, const SensorParams& p) {
  if (r < p.r_max) return p.sigma_n;
  return noise_scale_sigmoid(r, p.step_mu, p.step_nu, p);
}

inline double noise_scale(double r, const SensorParams& p) {
  if (const auto* s = std::get_if<SigmoidNoise>(&p.noise)) return noise_scale_sigmoid(r, s->mu, s->nu, p);
  return noise_scale_step(r, p);
}

/// Noise-free ranges cast to the planner horizon (not clamped at r_max).
inline Eigen::VectorXd predict_measurement(const Pose& x, const OccupancyGrid& grid, const SensorParams& p) {
  Eigen::VectorXd z(p.beams());
  const double horizon = p.cast_range();
  for (int i = 0; i < p.beams(); ++i) {
    z[i] = ray_cast(grid, x, p.beam_angles[static_cast<std::size_t>(i)], horizon, p.unknown_blocks_rays);
  }
  return z;
}

struct TrueMeasurement {
  Eigen::VectorXd z;
  std::vector<bool> valid;  // false: saturated at r_max, carries no information

  int valid_count() const { return static_cast<int>(std::count(valid.begin(), valid.end(), true)); }
};

/// Real sensor behavior: returns below r_max get Gaussian noise, everything
/// else saturates and is flagged invalid.
template <class Rng>
TrueMeasurement sample_true_measurement(const Pose& x_true, const OccupancyGrid& grid, const SensorParams& p,
                                        Rng& rng, bool inject_noise = true) {
  TrueMeasurement out;
  out.z.resize(p.beams());
  out.valid.assign(static_cast<std::size_t>(p.beams()), false);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < p.beams(); ++i) {
    const double r = ray_cast(grid, x_true, p.beam_angles[static_cast<std::size_t>(i)], p.r_max,
                              p.unknown_blocks_rays);
    if (r < p.r_max) {
      out.z[i] = inject_noise ? r + p.sigma_n * normal(rng) : r;
      out.valid[static_cast<std::size_t>(i)] = true;
    } else {
      out.z[i] = p.r_max;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model functors consumed by the filters.
//
// Motion:  Element operator()(Element x, Vec2 u, Vec2 m); Mat2 noise_cov().
// Sensor:  int dim(); Eigen::VectorXd operator()(Element x, VectorXd n);
//          Eigen::MatrixXd noise_cov(); optionally prepare(x) returning a
//          callable of n alone so repeated noise evaluations reuse the cast.

struct UnicycleMotion {
  MotionParams params;

  Pose operator()(const Pose& x, const Vec2& u, const Vec2& m) const { return motion_step(x, u, m, params); }
  Mat2 noise_cov() const { return params.noise_cov(); }
};

class RangeSensor {
 public:
  RangeSensor(const OccupancyGrid& grid, SensorParams params) : grid_(&grid), params_(std::move(params)) {}

  int dim() const { return params_.beams(); }
  const SensorParams& params() const { return params_; }
  SensorParams& params() { return params_; }
  const OccupancyGrid& grid() const { return *grid_; }

  /// z^i = r^i + N(r^i) n^i.
  struct Prepared {
    Eigen::VectorXd ranges;
    Eigen::VectorXd scales;
    Eigen::VectorXd operator()(const Eigen::VectorXd& n) const {
      return ranges + scales.cwiseProduct(n);
    }
  };

  Prepared prepare(const Pose& x) const {
    Prepared p;
    p.ranges = predict_measurement(x, *grid_, params_);
    p.scales.resize(p.ranges.size());
    for (Eigen::Index i = 0; i < p.ranges.size(); ++i) p.scales[i] = noise_scale(p.ranges[i], params_);
    return p;
  }

  Eigen::VectorXd operator()(const Pose& x, const Eigen::VectorXd& n) const { return prepare(x)(n); }

  Eigen::MatrixXd noise_cov() const { return Eigen::MatrixXd::Identity(dim(), dim()); }

 private:
  const OccupancyGrid* grid_;
  SensorParams params_;
};

}  // namespace bsp
