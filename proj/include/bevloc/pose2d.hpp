#pragma once

#include <cmath>
#include <stdexcept>

#include "bevloc/tensor.hpp"

namespace bevloc {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap to [-180, 180). Used for pose yaw and yaw errors.
inline double wrap_deg(double d) {
  double w = std::fmod(d + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  return w - 180.0;
}

// Wrap to (-180, 180]. Used for relative angular offsets fed to embeddings.
inline double wrap_relative_deg(double d) {
  double w = std::fmod(d, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

/**
 * @brief Planar rigid transform between two ego frames.
 *
 * Frames are x-forward / y-left; angles are measured from +y toward +x
 * (clockwise in plan view), and yaw uses the same sense. A pose xi mapping
 * frame A coordinates to frame B coordinates acts as
 *
 *   p_B = R(yaw) * (p_A + (x_m, y_m))
 *
 * with R(t) = [[cos t, -sin t], [sin t, cos t]]. A keyframe's world pose is
 * the transform from its ego frame to the world frame.
 */
struct Pose2D {
  double x_m = 0.0;
  double y_m = 0.0;
  double yaw_deg = 0.0;  // wrapped to [-180, 180)

  Pose2D() = default;
  Pose2D(double x, double y, double yaw) : x_m(x), y_m(y), yaw_deg(wrap_deg(yaw)) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(yaw))
      throw std::invalid_argument("Pose2D: non-finite component");
  }

  Vec2 translation() const { return Vec2(x_m, y_m); }

  Vec2 apply(const Vec2& p) const {
    const double t = deg2rad(yaw_deg);
    const double c = std::cos(t), s = std::sin(t);
    const double px = p.x() + x_m, py = p.y() + y_m;
    return Vec2(c * px - s * py, s * px + c * py);
  }

  // Origin of the input frame expressed in the output frame.
  Vec2 origin_in_parent() const { return apply(Vec2(0.0, 0.0)); }

  Pose2D inverse() const {
    const double t = deg2rad(yaw_deg);
    const double c = std::cos(t), s = std::sin(t);
    // p_A = R(-yaw) p_B - (x, y)  =>  (x', y') = -R(yaw) (x, y)
    return Pose2D(-(c * x_m - s * y_m), -(s * x_m + c * y_m), -yaw_deg);
  }

  static Pose2D from_origin_heading(const Vec2& origin, double yaw_deg_v) {
    const double t = deg2rad(yaw_deg_v);
    const double c = std::cos(t), s = std::sin(t);
    // want apply(0) == origin  =>  (x, y) = R(-yaw) * origin
    return Pose2D(c * origin.x() + s * origin.y(), -s * origin.x() + c * origin.y(),
                  yaw_deg_v);
  }
};

// (a * b)(p) == a(b(p))
inline Pose2D operator*(const Pose2D& a, const Pose2D& b) {
  const double tb = deg2rad(b.yaw_deg);
  const double c = std::cos(tb), s = std::sin(tb);
  // a(b(p)) = R(ya) (R(yb)(p + tb_vec) + ta_vec)
  //         = R(ya + yb) (p + tb_vec + R(-yb) ta_vec)
  const double rx = c * a.x_m + s * a.y_m;
  const double ry = -s * a.x_m + c * a.y_m;
  return Pose2D(b.x_m + rx, b.y_m + ry, a.yaw_deg + b.yaw_deg);
}

// Relative pose mapping frame `from` coordinates to frame `to` coordinates,
// given both poses expressed in a common parent frame.
inline Pose2D relative_pose(const Pose2D& from_world, const Pose2D& to_world) {
  return to_world.inverse() * from_world;
}

inline double frame_distance_m(const Pose2D& a_world, const Pose2D& b_world) {
  return (a_world.origin_in_parent() - b_world.origin_in_parent()).norm();
}

}  // namespace bevloc
