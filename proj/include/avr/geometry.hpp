#pragma once

#include <array>

namespace avr {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous pixel coordinates (origin top-left).
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool valid() const;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct FrameSize {
  int width = 0;
  int height = 0;

  bool valid() const { return width >= 2 && height >= 2; }
  Point2 center() const { return {width / 2.0, height / 2.0}; }
  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

/// 3x3 homogeneous transform, row-major. The bottom row is always (0, 0, 1).
class Affine2D {
 public:
  Affine2D() = default;  // identity

  /// Builds from the top two rows; the projective row is fixed.
  static Affine2D from_rows(double a, double b, double tx, double c, double d, double ty);
  static Affine2D translation(double tx, double ty);
  static Affine2D identity() { return {}; }

  Point2 apply(Point2 p) const;
  double determinant() const;
  /// Throws DomainError when |det| < 1e-12.
  Affine2D inverse() const;

  double operator()(int row, int col) const { return m_[row * 3 + col]; }
  const std::array<double, 9>& entries() const { return m_; }

  friend bool operator==(const Affine2D&, const Affine2D&) = default;

 private:
  std::array<double, 9> m_{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

/// a after b: compose(a, b).apply(p) == a.apply(b.apply(p)).
Affine2D compose(const Affine2D& a, const Affine2D& b);

Point2 bbox_center(const BoundingBox& b);

/// Translation moving bbox_center(b) onto the frame center (W/2, H/2).
Affine2D recenter_transform(const BoundingBox& b, FrameSize f);

/// Uniform scale by s about the frame center. Throws DomainError unless s is
/// finite and positive.
Affine2D zoom_transform(double s, FrameSize f);

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  /// Throws DomainError when the norm is below 1e-9 or non-finite.
  Quaternion normalized() const;

  /// Right-handed rotation of `degrees` about the unit axis (ax, ay, az).
  static Quaternion from_axis_angle(double ax, double ay, double az, double degrees);
  /// Intrinsic Z(yaw)-Y(pitch)-X(roll) composition.
  static Quaternion from_yaw_pitch_roll(double yaw_deg, double pitch_deg, double roll_deg);
};

Quaternion operator*(const Quaternion& a, const Quaternion& b);

struct YawPitch {
  double yaw_deg = 0.0;    // (-180, 180]
  double pitch_deg = 0.0;  // [-90, 90]
  bool gimbal_lock = false;
};

/// Intrinsic Z-Y-X decomposition of q.normalized() with +X forward, +Z up;
/// roll is dropped.
/// Within 0.01 deg of |pitch| = 90 the yaw is reported as 0 and flagged.
YawPitch quaternion_to_yaw_pitch(const Quaternion& q);

}  // namespace avr
