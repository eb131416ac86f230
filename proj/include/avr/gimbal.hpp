#pragma once

#include "avr/geometry.hpp"

namespace avr {

inline constexpr double kPanLimitDeg = 90.0;
inline constexpr double kTiltMinDeg = 0.0;
inline constexpr double kTiltMaxDeg = 60.0;
inline constexpr double kZoomMin = 1.0;
inline constexpr double kZoomMax = 7.0;
inline constexpr double kZoomStep = 0.05;
inline constexpr double kMaxZoomRate = 2.0;  // zoom units per second
inline constexpr double kFocalMinMm = 4.8;
inline constexpr double kFocalMaxMm = 48.2;
inline constexpr double kAngleQuantumDeg = 0.5;
inline constexpr double kPoseRateHz = 120.0;

/// Pan/tilt/zoom state of the camera head.
struct CameraState {
  double pan = 0.0;        // degrees, [-90, 90]
  double tilt = 0.0;       // degrees, [0, 60]
  double zoom = 1.0;       // [1, 7]
  double focal_mm = kFocalMinMm;
  double last_update_ms = 0.0;

  /// Range checks plus focal_mm == focal_from_zoom(zoom).
  bool valid() const;
  /// valid() and zoom exactly on the 0.05 grid (nearest double to 1 + k/20).
  bool on_step_grid() const;
};

/// Linear map of [1, 7] onto [4.8, 48.2] mm. Throws DomainError outside [1, 7].
double focal_from_zoom(double z);

struct PanTilt {
  double pan = 0.0;
  double tilt = 0.0;
};

/// Clamp to the mechanical range, then round to the nearest 0.5 deg (ties
/// away from zero).
PanTilt clamp_quantize(double yaw_deg, double pitch_deg);

/// Pose -> commanded pan/tilt. In gimbal lock the previous pan is held.
CameraState map_pose(const Quaternion& q, const CameraState& s);

enum class Admission { accepted, too_soon, time_regression };

/// Fixed-cadence admission gate. Accepted updates are pinned to a grid of
/// period 1000/120 ms anchored at the first accepted sample; a caller more
/// than one period late re-anchors the grid. Over any window of T seconds at
/// most ceil(120 T) + 1 updates pass.
class RateGate {
 public:
  explicit RateGate(double rate_hz = kPoseRateHz);

  Admission admit(double t_ms);
  double min_interval_ms() const { return interval_ms_; }
  bool has_accepted() const { return started_; }

 private:
  double interval_ms_;
  double next_due_ms_ = 0.0;
  double last_seen_ms_ = 0.0;
  bool started_ = false;
  bool seen_ = false;
};

/// z' = clamp(z + 0.05 dir, 1, 7), snapped to the 0.05 grid.
CameraState zoom_step(const CameraState& s, int dir);

/// z' = clamp(z + v dt, 1, 7). Throws DomainError for dt < 0 or |v| > 2/s.
CameraState zoom_rate(const CameraState& s, double v_per_s, double dt_ms);

}  // namespace avr
