#pragma once

// Gaussian beliefs on a 3-dof group and their dynamics: on-manifold UKF,
// EKF with numerical Jacobians, and the compact stochastic form
//   b' = ( prior_mean * exp(sqrt(K V K^T) w),  vech(chol(Sigma_prior - K V K^T)) )
// that the optimizer linearizes.

#include <array>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "bsp/lie_se2.hpp"
#include "bsp/models.hpp"

namespace bsp {

using BeliefVector = Eigen::Matrix<double, 9, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPsdFloor = 1e-12;
inline constexpr double kNoiseFdStep = 1e-4;
inline constexpr double kStateFdStep = 1e-5;

/// Lower-triangular entries in (L11, L21, L22, L31, L32, L33) order.
inline Vec6 vech(const Mat3& l) {
  Vec6 v;
  v << l(0, 0), l(1, 0), l(1, 1), l(2, 0), l(2, 1), l(2, 2);
  return v;
}

inline Mat3 unvech(const Eigen::Ref<const Vec6>& v) {
  Mat3 l = Mat3::Zero();
  l(0, 0) = v[0];
  l(1, 0) = v[1];
  l(1, 1) = v[2];
  l(2, 0) = v[3];
  l(2, 1) = v[4];
  l(2, 2) = v[5];
  return l;
}

/// Symmetrize and lift eigenvalues below `floor` up to `floor`.
template <int N>
Eigen::Matrix<double, N, N> repair_psd(const Eigen::Matrix<double, N, N>& m, double floor = kPsdFloor) {
  using Mat = Eigen::Matrix<double, N, N>;
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.eigenvalues().minCoeff() >= floor) return sym;
  const auto clamped = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}

/// Lower Cholesky factor after PSD repair; diagonal is nonnegative.
inline Mat3 psd_cholesky(const Mat3& m) {
  const Mat3 r = repair_psd<3>(m);
  Eigen::LLT<Mat3> llt(r);
  Mat3 l = llt.matrixL();
  return l;
}

/// Symmetric PSD square root via eigendecomposition, eigenvalues clamped at 0.
inline Mat3 psd_sqrt(const Mat3& m) {
  const Mat3 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> es(sym);
  const Vec3 s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

template <class Group = SE2Group>
struct GaussianBelief {
  using Element = typename Group::Element;

  Element mean{};
  Mat3 chol = Mat3::Zero();  // lower-triangular factor of the tangent covariance

  Mat3 covariance() const { return chol * chol.transpose(); }

  BeliefVector vector() const {
    BeliefVector b;
    b.head<3>() = Group::to_vector(mean);
    b.tail<6>() = vech(chol);
    return b;
  }

  static GaussianBelief from_vector(const Eigen::Ref<const BeliefVector>& b) {
    return {Group::from_vector(b.head<3>()), unvech(b.tail<6>())};
  }

  static GaussianBelief from_covariance(const Element& mean, const Mat3& cov) {
    return {mean, psd_cholesky(cov)};
  }
};

using Belief = GaussianBelief<SE2Group>;

// ---------------------------------------------------------------------------
// Sigma points

struct UkfParams {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  // Alternative weights: w0 + 3 - alpha^2 on the outer mean weights and
  // 1/(2(n+lambda)) everywhere for covariance. They do not sum to one; kept for
  // comparison runs only.
  bool literal_weights = false;
};

template <class Group = SE2Group>
struct SigmaSet {
  static constexpr int kCount = 7;
  std::array<typename Group::Element, kCount> points;
  std::array<double, kCount> wm{};
  std::array<double, kCount> wc{};
  // Tangent offsets of each point from the mean (column 0 is zero).
  std::array<Vec3, kCount> offsets;
};

template <class Group>
SigmaSet<Group> sigma_points(const GaussianBelief<Group>& b, const UkfParams& p) {
  constexpr int n = 3;
  const double lambda = p.alpha * p.alpha * (n + p.kappa) - n;
  if (!(n + lambda > 0.0)) throw std::invalid_argument("invalid spread parameters");

  SigmaSet<Group> s;
  const Mat3 spread = std::sqrt(n + lambda) * b.chol;
  s.points[0] = b.mean;
  s.offsets[0] = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3 col = spread.col(i);
    s.offsets[static_cast<std::size_t>(1 + i)] = col;
    s.offsets[static_cast<std::size_t>(1 + i + n)] = -col;
    s.points[static_cast<std::size_t>(1 + i)] = Group::compose(b.mean, Group::exp(col));
    s.points[static_cast<std::size_t>(1 + i + n)] = Group::compose(b.mean, Group::exp(-col));
  }

  const double w0 = lambda / (n + lambda);
  const double wi = 1.0 / (2.0 * (n + lambda));
  if (p.literal_weights) {
    s.wm[0] = w0;
    s.wc[0] = wi;
    for (int i = 1; i < SigmaSet<Group>::kCount; ++i) {
      s.wm[static_cast<std::size_t>(i)] = w0 + (3.0 - p.alpha * p.alpha);
      s.wc[static_cast<std::size_t>(i)] = wi;
    }
  } else {
    s.wm[0] = w0;
    s.wc[0] = w0 + (1.0 - p.alpha * p.alpha + p.beta);
    for (int i = 1; i < SigmaSet<Group>::kCount; ++i) {
      s.wm[static_cast<std::size_t>(i)] = wi;
      s.wc[static_cast<std::size_t>(i)] = wi;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Numerical noise / state Jacobians shared by both filters.

namespace detail {

template <class S, class Element>
concept PreparableSensor = requires(const S& s, const Element& x) { s.prepare(x); };

/// Callable n -> h(x, n) for fixed x.
template <class Sensor, class Element>
auto prepare_sensor(const Sensor& sensor, const Element& x) {
  if constexpr (PreparableSensor<Sensor, Element>) {
    return sensor.prepare(x);
  } else {
    return [&sensor, x](const Eigen::VectorXd& n) -> Eigen::VectorXd { return sensor(x, n); };
  }
}

/// Central differences of a vector function of n around n = 0.
template <class Fn>
Eigen::MatrixXd noise_jacobian(const Fn& h, int rows, int noise_dim, double step = kNoiseFdStep) {
  Eigen::MatrixXd j(rows, noise_dim);
  Eigen::VectorXd n = Eigen::VectorXd::Zero(noise_dim);
  for (int i = 0; i < noise_dim; ++i) {
    n[i] = step;
    const Eigen::VectorXd plus = h(n);
    n[i] = -step;
    const Eigen::VectorXd minus = h(n);
    n[i] = 0.0;
    j.col(i) = (plus - minus) / (2.0 * step);
  }
  return j;
}

/// M = d f(x, u, m) / d m at m = 0, expressed in the tangent at f(x, u, 0).
template <class Group, class Motion>
Eigen::Matrix<double, 3, 2> motion_noise_jacobian(const Motion& motion, const typename Group::Element& x,
                                                   const Vec2& u, const typename Group::Element& fx) {
  const auto fx_inv = Group::inverse(fx);
  Eigen::Matrix<double, 3, 2> m;
  for (int i = 0; i < 2; ++i) {
    Vec2 dm = Vec2::Zero();
    dm[i] = kNoiseFdStep;
    const Vec3 plus = Group::log(Group::compose(fx_inv, motion(x, u, dm)));
    const Vec3 minus = Group::log(Group::compose(fx_inv, motion(x, u, -dm)));
    m.col(i) = (plus - minus) / (2.0 * kNoiseFdStep);
  }
  return m;
}

inline Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

inline std::vector<int> active_rows(int dim, const std::vector<bool>* mask) {
  std::vector<int> rows;
  for (int i = 0; i < dim; ++i) {
    if (!mask || (*mask)[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// UKF

template <class Group, class Motion>
GaussianBelief<Group> ukf_predict(const GaussianBelief<Group>& b, const Vec2& u, const Motion& motion,
                                  const UkfParams& ukf = {}) {
  const auto s = sigma_points(b, ukf);
  const auto f0 = motion(s.points[0], u, Vec2::Zero());
  const auto f0_inv = Group::inverse(f0);

  std::array<Vec3, SigmaSet<Group>::kCount> xi;
  Vec3 mean_xi = Vec3::Zero();
  for (int i = 0; i < SigmaSet<Group>::kCount; ++i) {
    const auto k = static_cast<std::size_t>(i);
    xi[k] = i == 0 ? Vec3::Zero() : Group::log(Group::compose(f0_inv, motion(s.points[k], u, Vec2::Zero())));
    mean_xi += s.wm[k] * xi[k];
  }
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < SigmaSet<Group>::kCount; ++i) {
    const auto k = static_cast<std::size_t>(i);
    cov += s.wc[k] * xi[k] * xi[k].transpose();
  }
  const auto m = detail::motion_noise_jacobian<Group>(motion, b.mean, u, f0);
  cov += m * motion.noise_cov() * m.transpose();

  return {Group::compose(f0, Group::exp(mean_xi)), psd_cholesky(cov)};
}

template <class Group>
struct UpdateResult {
  GaussianBelief<Group> posterior;
  Eigen::MatrixXd innovation_cov;  // V
  Eigen::MatrixXd gain;            // K, 3 x m
  Eigen::VectorXd predicted;       // z_bar
  Mat3 innovation_effect;          // K V K^T
};

/// Measurement update. `z` holds all beams; when `valid` is given, beams
/// flagged false are removed from the innovation system entirely.
template <class Group, class Sensor>
UpdateResult<Group> ukf_update(const GaussianBelief<Group>& prior, const Eigen::VectorXd& z, const Sensor& sensor,
                               const UkfParams& ukf = {}, const std::vector<bool>* valid = nullptr) {
  const auto s = sigma_points(prior, ukf);
  const int dim = sensor.dim();
  const auto rows = detail::active_rows(dim, valid);
  const int m = static_cast<int>(rows.size());

  UpdateResult<Group> out;
  if (m == 0) {
    out.posterior = prior;
    out.innovation_cov.resize(0, 0);
    out.gain.resize(3, 0);
    out.predicted.resize(0);
    out.innovation_effect.setZero();
    return out;
  }

  const Eigen::VectorXd zero_n = Eigen::VectorXd::Zero(dim);
  const auto h0 = detail::prepare_sensor(sensor, s.points[0]);
  std::array<Eigen::VectorXd, SigmaSet<Group>::kCount> zs;
  zs[0] = detail::select_rows(h0(zero_n), rows);
  for (int i = 1; i < SigmaSet<Group>::kCount; ++i) {
    zs[static_cast<std::size_t>(i)] = detail::select_rows(sensor(s.points[static_cast<std::size_t>(i)], zero_n), rows);
  }
  Eigen::VectorXd z_bar = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < SigmaSet<Group>::kCount; ++i) z_bar += s.wm[static_cast<std::size_t>(i)] * zs[static_cast<std::size_t>(i)];

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd pxz = Eigen::MatrixXd::Zero(3, m);
  for (int i = 0; i < SigmaSet<Group>::kCount; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Eigen::VectorXd d = zs[k] - z_bar;
    v.noalias() += s.wc[k] * d * d.transpose();
    pxz.noalias() += s.wc[k] * s.offsets[k] * d.transpose();
  }
  const Eigen::MatrixXd n_full = detail::noise_jacobian(h0, dim, dim);
  Eigen::MatrixXd n_rows(m, dim);
  for (int r = 0; r < m; ++r) n_rows.row(r) = n_full.row(rows[static_cast<std::size_t>(r)]);
  v.noalias() += n_rows * sensor.noise_cov() * n_rows.transpose();
  v = 0.5 * (v + v.transpose());

  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw std::runtime_error("singular innovation covariance");
  }
  const Eigen::MatrixXd k_gain = ldlt.solve(pxz.transpose()).transpose();
  const Mat3 effect = k_gain * v * k_gain.transpose();

  const Eigen::VectorXd z_act = detail::select_rows(z, rows);
  const Vec3 correction = k_gain * (z_act - z_bar);
  out.posterior.mean = Group::compose(prior.mean, Group::exp(correction));
  out.posterior.chol = psd_cholesky(prior.covariance() - effect);
  out.innovation_cov = std::move(v);
  out.gain = k_gain;
  out.predicted = std::move(z_bar);
  out.innovation_effect = 0.5 * (effect + effect.transpose());
  return out;
}

// ---------------------------------------------------------------------------
// EKF (Jacobians by central differences in the group tangent)

template <class Group, class Motion>
GaussianBelief<Group> ekf_predict(const GaussianBelief<Group>& b, const Vec2& u, const Motion& motion) {
  const auto f0 = motion(b.mean, u, Vec2::Zero());
  const auto f0_inv = Group::inverse(f0);
  Mat3 a;
  for (int j = 0; j < 3; ++j) {
    Vec3 d = Vec3::Zero();
    d[j] = kStateFdStep;
    const Vec3 plus = Group::log(Group::compose(f0_inv, motion(Group::compose(b.mean, Group::exp(d)), u, Vec2::Zero())));
    const Vec3 minus = Group::log(Group::compose(f0_inv, motion(Group::compose(b.mean, Group::exp(-d)), u, Vec2::Zero())));
    a.col(j) = (plus - minus) / (2.0 * kStateFdStep);
  }
  const auto m = detail::motion_noise_jacobian<Group>(motion, b.mean, u, f0);
  const Mat3 gamma = a * b.covariance() * a.transpose() + m * motion.noise_cov() * m.transpose();
  return {f0, psd_cholesky(gamma)};
}

template <class Group, class Sensor>
UpdateResult<Group> ekf_update(const GaussianBelief<Group>& prior, const Eigen::VectorXd& z, const Sensor& sensor,
                               const std::vector<bool>* valid = nullptr) {
  const int dim = sensor.dim();
  const auto rows = detail::active_rows(dim, valid);
  const int m = static_cast<int>(rows.size());
  UpdateResult<Group> out;
  if (m == 0) {
    out.posterior = prior;
    out.innovation_cov.resize(0, 0);
    out.gain.resize(3, 0);
    out.predicted.resize(0);
    out.innovation_effect.setZero();
    return out;
  }
  const Eigen::VectorXd zero_n = Eigen::VectorXd::Zero(dim);
  const auto h0 = detail::prepare_sensor(sensor, prior.mean);
  const Eigen::VectorXd z_bar = detail::select_rows(h0(zero_n), rows);

  Eigen::MatrixXd h(m, 3);
  for (int j = 0; j < 3; ++j) {
    Vec3 d = Vec3::Zero();
    d[j] = kStateFdStep;
    const Eigen::VectorXd plus = detail::select_rows(sensor(Group::compose(prior.mean, Group::exp(d)), zero_n), rows);
    const Eigen::VectorXd minus = detail::select_rows(sensor(Group::compose(prior.mean, Group::exp(-d)), zero_n), rows);
    h.col(j) = (plus - minus) / (2.0 * kStateFdStep);
  }
  const Eigen::MatrixXd n_full = detail::noise_jacobian(h0, dim, dim);
  Eigen::MatrixXd n_rows(m, dim);
  for (int r = 0; r < m; ++r) n_rows.row(r) = n_full.row(rows[static_cast<std::size_t>(r)]);

  const Mat3 gamma = prior.covariance();
  Eigen::MatrixXd v = h * gamma * h.transpose() + n_rows * sensor.noise_cov() * n_rows.transpose();
  v = 0.5 * (v + v.transpose());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw std::runtime_error("singular innovation covariance");
  }
  const Eigen::MatrixXd k_gain = ldlt.solve(h * gamma).transpose();  // Gamma H^T V^-1
  const Mat3 khg = k_gain * h * gamma;
  const Mat3 effect = 0.5 * (khg + khg.transpose());

  const Vec3 correction = k_gain * (detail::select_rows(z, rows) - z_bar);
  out.posterior.mean = Group::compose(prior.mean, Group::exp(correction));
  out.posterior.chol = psd_cholesky(gamma - effect);
  out.innovation_cov = std::move(v);
  out.gain = k_gain;
  out.predicted = z_bar;
  out.innovation_effect = effect;
  return out;
}

// ---------------------------------------------------------------------------
// Compact belief dynamics Phi(b, u, w)

enum class FilterKind { Ukf, Ekf };

/// Phi evaluated at fixed (b, u): cheap to re-evaluate for many w.
template <class Group>
struct PreparedBeliefStep {
  typename Group::Element prior_mean{};
  Mat3 innovation_sqrt = Mat3::Zero();  // sqrt(K V K^T)
  Mat3 posterior_chol = Mat3::Zero();

  BeliefVector operator()(const Vec3& w) const {
    BeliefVector b;
    b.head<3>() = Group::to_vector(Group::compose(prior_mean, Group::exp(innovation_sqrt * w)));
    b.tail<6>() = vech(posterior_chol);
    return b;
  }
};

/// Belief dynamics with a chosen filter. Motion and sensor are held by value;
/// a RangeSensor only references its grid.
template <class Group, class Motion, class Sensor>
class BeliefDynamics {
 public:
  static constexpr int kStateDim = 9;
  static constexpr int kControlDim = 2;
  static constexpr int kNoiseDim = 3;

  BeliefDynamics(Motion motion, Sensor sensor, FilterKind kind = FilterKind::Ukf, UkfParams ukf = {})
      : motion_(std::move(motion)), sensor_(std::move(sensor)), kind_(kind), ukf_(ukf) {}

  const Motion& motion() const { return motion_; }
  const Sensor& sensor() const { return sensor_; }
  Sensor& sensor() { return sensor_; }
  FilterKind kind() const { return kind_; }
  const UkfParams& ukf() const { return ukf_; }

  /// The covariance path and K V K^T do not depend on the realized
  /// measurement, so the update is run once with a placeholder z and only
  /// its covariance outputs are kept.
  PreparedBeliefStep<Group> prepare(const BeliefVector& b, const Vec2& u) const {
    const auto belief = GaussianBelief<Group>::from_vector(b);
    const Eigen::VectorXd placeholder = Eigen::VectorXd::Zero(sensor_.dim());
    GaussianBelief<Group> prior;
    UpdateResult<Group> upd;
    if (kind_ == FilterKind::Ukf) {
      prior = ukf_predict(belief, u, motion_, ukf_);
      upd = ukf_update(prior, placeholder, sensor_, ukf_);
    } else {
      prior = ekf_predict(belief, u, motion_);
      upd = ekf_update(prior, placeholder, sensor_);
    }
    PreparedBeliefStep<Group> step;
    step.prior_mean = prior.mean;
    step.innovation_sqrt = psd_sqrt(upd.innovation_effect);
    step.posterior_chol = upd.posterior.chol;
    return step;
  }

  BeliefVector operator()(const BeliefVector& b, const Vec2& u, const Vec3& w) const { return prepare(b, u)(w); }

 private:
  Motion motion_;
  Sensor sensor_;
  FilterKind kind_;
  UkfParams ukf_;
};

}  // namespace bsp
