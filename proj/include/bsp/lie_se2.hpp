#pragma once

// SE(2) group and algebra in closed form, plus the small group-traits
// adaptors the filters are templated on.

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace bsp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Algebra coordinates (v_x, v_y, omega).
using Twist = Eigen::Vector3d;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

inline constexpr double kSmallAngle = 1e-6;

struct Pose {
  Vec2 translation = Vec2::Zero();
  double theta = 0.0;

  Pose() = default;
  Pose(double x, double y, double th) : translation(x, y), theta(normalize_angle(th)) {}
  Pose(const Vec2& t, double th) : translation(t), theta(normalize_angle(th)) {}

  static Pose identity() { return {}; }
  static Pose from_vector(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

  double x() const { return translation.x(); }
  double y() const { return translation.y(); }

  Mat2 rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Mat2 r;
    r << c, -s, s, c;
    return r;
  }

  /// (x, y, theta), the serialization order used by every file format.
  Vec3 vector() const { return {translation.x(), translation.y(), theta}; }

  /// 3x3 homogeneous matrix.
  Mat3 matrix() const {
    Mat3 m = Mat3::Identity();
    m.topLeftCorner<2, 2>() = rotation();
    m.topRightCorner<2, 1>() = translation;
    return m;
  }
};

inline Pose compose(const Pose& a, const Pose& b) {
  return {a.translation + a.rotation() * b.translation, a.theta + b.theta};
}

inline Pose inverse(const Pose& a) {
  return {-(a.rotation().transpose() * a.translation), -a.theta};
}

namespace detail {

// V(w) maps algebra translation to group translation.
inline Mat2 left_jacobian_v(double w) {
  double a, b;  // sin(w)/w, (1 - cos(w))/w
  if (std::abs(w) < kSmallAngle) {
    const double w2 = w * w;
    a = 1.0 - w2 / 6.0;
    b = w / 2.0 - w * w2 / 24.0;
  } else {
    a = std::sin(w) / w;
    const double h = std::sin(0.5 * w);
    b = 2.0 * h * h / w;  // half-angle form avoids cancellation in 1 - cos
  }
  Mat2 v;
  v << a, -b, b, a;
  return v;
}

inline Mat2 left_jacobian_v_inverse(double w) {
  double a;  // (w/2) cot(w/2)
  if (std::abs(w) < kSmallAngle) {
    a = 1.0 - w * w / 12.0;
  } else {
    a = 0.5 * w * std::cos(0.5 * w) / std::sin(0.5 * w);
  }
  const double b = 0.5 * w;
  Mat2 v;
  v << a, b, -b, a;
  return v;
}

}  // namespace detail

inline Pose exp(const Twist& xi) {
  const double w = xi.z();
  return {detail::left_jacobian_v(w) * xi.head<2>(), w};
}

/// Inverse of exp. A pose at theta = pi maps to omega = +pi.
inline Twist log(const Pose& p) {
  const double w = normalize_angle(p.theta);
  Twist xi;
  xi.head<2>() = detail::left_jacobian_v_inverse(w) * p.translation;
  xi.z() = w;
  return xi;
}

/// log(a^-1 * b): the tangent at a that reaches b.
inline Twist between(const Pose& a, const Pose& b) { return log(compose(inverse(a), b)); }

/// a * exp(delta).
inline Pose retract(const Pose& a, const Twist& delta) { return compose(a, exp(delta)); }

// Group traits used by the generic filters. Both expose a 3-dim tangent.

struct SE2Group {
  using Element = Pose;
  static Element compose(const Element& a, const Element& b) { return bsp::compose(a, b); }
  static Element inverse(const Element& a) { return bsp::inverse(a); }
  static Element exp(const Vec3& xi) { return bsp::exp(xi); }
  static Vec3 log(const Element& a) { return bsp::log(a); }
  static Vec3 to_vector(const Element& a) { return a.vector(); }
  static Element from_vector(const Vec3& v) { return Pose::from_vector(v); }
};

/// R^3 under addition. Turns the on-manifold filters into textbook ones,
/// which is what the linear-Gaussian oracle tests need.
struct R3Group {
  using Element = Vec3;
  static Element compose(const Element& a, const Element& b) { return a + b; }
  static Element inverse(const Element& a) { return -a; }
  static Element exp(const Vec3& xi) { return xi; }
  static Vec3 log(const Element& a) { return a; }
  static Vec3 to_vector(const Element& a) { return a; }
  static Element from_vector(const Vec3& v) { return v; }
};

}  // namespace bsp
