#include "avr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avr/errors.hpp"

namespace avr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kGimbalLockMarginDeg = 0.01;

}  // namespace

bool BoundingBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
}

Affine2D Affine2D::from_rows(double a, double b, double tx, double c, double d, double ty) {
  Affine2D t;
  t.m_ = {a, b, tx, c, d, ty, 0.0, 0.0, 1.0};
  return t;
}

Affine2D Affine2D::translation(double tx, double ty) {
  return from_rows(1.0, 0.0, tx, 0.0, 1.0, ty);
}

Point2 Affine2D::apply(Point2 p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
}

double Affine2D::determinant() const { return m_[0] * m_[4] - m_[1] * m_[3]; }

Affine2D Affine2D::inverse() const {
  const double det = determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw DomainError("affine transform is singular");
  }
  const double a = m_[4] / det;
  const double b = -m_[1] / det;
  const double c = -m_[3] / det;
  const double d = m_[0] / det;
  const double tx = -(a * m_[2] + b * m_[5]);
  const double ty = -(c * m_[2] + d * m_[5]);
  return from_rows(a, b, tx, c, d, ty);
}

Affine2D compose(const Affine2D& a, const Affine2D& b) {
  // Only the affine block is multiplied; the projective row stays (0, 0, 1).
  return Affine2D::from_rows(a(0, 0) * b(0, 0) + a(0, 1) * b(1, 0),
                             a(0, 0) * b(0, 1) + a(0, 1) * b(1, 1),
                             a(0, 0) * b(0, 2) + a(0, 1) * b(1, 2) + a(0, 2),
                             a(1, 0) * b(0, 0) + a(1, 1) * b(1, 0),
                             a(1, 0) * b(0, 1) + a(1, 1) * b(1, 1),
                             a(1, 0) * b(0, 2) + a(1, 1) * b(1, 2) + a(1, 2));
}

Point2 bbox_center(const BoundingBox& b) {
  return {(b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0};
}

Affine2D recenter_transform(const BoundingBox& b, FrameSize f) {
  const Point2 c = bbox_center(b);
  const Point2 target = f.center();
  return Affine2D::translation(target.x - c.x, target.y - c.y);
}

Affine2D zoom_transform(double s, FrameSize f) {
  if (!std::isfinite(s) || s <= 0.0) {
    throw DomainError("zoom scale must be finite and positive");
  }
  const Point2 c = f.center();
  // x'' = s (x' - W/2) + W/2
  return Affine2D::from_rows(s, 0.0, c.x - s * c.x, 0.0, s, c.y - s * c.y);
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!std::isfinite(n) || n < 1e-9) {
    throw DomainError("quaternion norm is zero or non-finite");
  }
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::from_axis_angle(double ax, double ay, double az, double degrees) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  if (!(n > 0.0)) throw DomainError("rotation axis is zero");
  const double half = degrees * kDeg / 2.0;
  const double s = std::sin(half) / n;
  return {std::cos(half), ax * s, ay * s, az * s};
}

Quaternion Quaternion::from_yaw_pitch_roll(double yaw_deg, double pitch_deg, double roll_deg) {
  const Quaternion qz = from_axis_angle(0, 0, 1, yaw_deg);
  const Quaternion qy = from_axis_angle(0, 1, 0, pitch_deg);
  const Quaternion qx = from_axis_angle(1, 0, 0, roll_deg);
  return qz * qy * qx;
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

YawPitch quaternion_to_yaw_pitch(const Quaternion& q_in) {
  const Quaternion q = q_in.normalized();
  const double sin_pitch = std::clamp(2.0 * (q.w * q.y - q.z * q.x), -1.0, 1.0);
  YawPitch out;
  out.pitch_deg = std::asin(sin_pitch) / kDeg;
  if (std::abs(out.pitch_deg) >= 90.0 - kGimbalLockMarginDeg) {
    out.yaw_deg = 0.0;
    out.gimbal_lock = true;
    return out;
  }
  double yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z)) / kDeg;
  if (yaw <= -180.0) yaw += 360.0;
  out.yaw_deg = yaw;
  return out;
}

}  // namespace avr
