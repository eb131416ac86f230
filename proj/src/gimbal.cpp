#include "avr/gimbal.hpp"

#include <algorithm>
#include <cmath>

#include "avr/errors.hpp"

namespace avr {

namespace {

constexpr int kZoomGridSteps = 120;  // (7 - 1) / 0.05
constexpr int kStepsPerUnit = 20;    // 1 / 0.05

double quantize_angle(double deg) {
  return std::round(deg / kAngleQuantumDeg) * kAngleQuantumDeg;
}

CameraState with_zoom(const CameraState& s, double z) {
  CameraState out = s;
  out.zoom = std::clamp(z, kZoomMin, kZoomMax);
  out.focal_mm = focal_from_zoom(out.zoom);
  return out;
}

}  // namespace

bool CameraState::valid() const {
  return std::isfinite(pan) && std::isfinite(tilt) && std::isfinite(zoom) && pan >= -kPanLimitDeg &&
         pan <= kPanLimitDeg && tilt >= kTiltMinDeg && tilt <= kTiltMaxDeg && zoom >= kZoomMin &&
         zoom <= kZoomMax && focal_mm == focal_from_zoom(zoom);
}

bool CameraState::on_step_grid() const {
  if (!valid()) return false;
  const double k = std::round((zoom - kZoomMin) * kStepsPerUnit);
  return zoom == (kStepsPerUnit + k) / kStepsPerUnit;
}

double focal_from_zoom(double z) {
  if (!(z >= kZoomMin && z <= kZoomMax)) throw DomainError("zoom outside [1, 7]");
  // std::lerp is exact at both endpoints and monotone in between.
  return std::lerp(kFocalMinMm, kFocalMaxMm, (z - kZoomMin) / (kZoomMax - kZoomMin));
}

PanTilt clamp_quantize(double yaw_deg, double pitch_deg) {
  const double pan = std::clamp(yaw_deg, -kPanLimitDeg, kPanLimitDeg);
  const double tilt = std::clamp(pitch_deg, kTiltMinDeg, kTiltMaxDeg);
  // std::round breaks ties away from zero.
  return {quantize_angle(pan), quantize_angle(tilt)};
}

CameraState map_pose(const Quaternion& q, const CameraState& s) {
  const YawPitch yp = quaternion_to_yaw_pitch(q.normalized());
  const PanTilt pt = clamp_quantize(yp.yaw_deg, yp.pitch_deg);
  CameraState out = s;
  out.pan = yp.gimbal_lock ? s.pan : pt.pan;
  out.tilt = pt.tilt;
  return out;
}

RateGate::RateGate(double rate_hz) : interval_ms_(1000.0 / rate_hz) {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw DomainError("rate must be positive");
}

Admission RateGate::admit(double t_ms) {
  if (!std::isfinite(t_ms) || (seen_ && t_ms < last_seen_ms_)) return Admission::time_regression;
  seen_ = true;
  last_seen_ms_ = t_ms;
  if (!started_) {
    started_ = true;
    next_due_ms_ = t_ms + interval_ms_;
    return Admission::accepted;
  }
  if (t_ms < next_due_ms_ - 1e-9) return Admission::too_soon;
  next_due_ms_ = (t_ms - next_due_ms_ >= interval_ms_) ? t_ms + interval_ms_
                                                       : next_due_ms_ + interval_ms_;
  return Admission::accepted;
}

CameraState zoom_step(const CameraState& s, int dir) {
  if (dir != 1 && dir != -1) throw DomainError("zoom step direction must be +1 or -1");
  const long steps = std::lround((s.zoom + kZoomStep * dir - kZoomMin) / kZoomStep);
  const long clamped = std::clamp<long>(steps, 0, kZoomGridSteps);
  // Integer quotient: the nearest double to the decimal grid value.
  return with_zoom(s, static_cast<double>(kStepsPerUnit + clamped) / kStepsPerUnit);
}

CameraState zoom_rate(const CameraState& s, double v_per_s, double dt_ms) {
  if (!(dt_ms >= 0.0) || !std::isfinite(dt_ms)) throw DomainError("dt must be non-negative");
  if (!std::isfinite(v_per_s) || std::abs(v_per_s) > kMaxZoomRate) {
    throw DomainError("zoom rate outside [-2, 2] per second");
  }
  if (v_per_s == 0.0 || dt_ms == 0.0) return s;
  return with_zoom(s, s.zoom + v_per_s * dt_ms / 1000.0);
}

}  // namespace avr
