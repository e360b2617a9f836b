#include "stalign/geometry.hpp"

#include <cmath>

#include "stalign/errors.hpp"

namespace stalign {

double wrap_angle(double rad) {
  double a = std::fmod(rad, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Point2D apply(const RigidTransform2D& t, const Point2D& p) {
  const double c = std::cos(t.rotation);
  const double s = std::sin(t.rotation);
  return {c * p.x - s * p.y + t.tx, s * p.x + c * p.y + t.ty};
}

PointSet2D apply_transform(const RigidTransform2D& t, const PointSet2D& pts) {
  PointSet2D out;
  out.reserve(pts.size());
  for (const Point2D& p : pts) out.push_back(apply(t, p));
  return out;
}

RigidTransform2D compose(const RigidTransform2D& a, const RigidTransform2D& b) {
  const Point2D shifted = apply(a, {b.tx, b.ty});
  return {wrap_angle(a.rotation + b.rotation), shifted.x, shifted.y};
}

RigidTransform2D inverse(const RigidTransform2D& t) {
  const double c = std::cos(t.rotation);
  const double s = std::sin(t.rotation);
  // R^T * (-t)
  return {wrap_angle(-t.rotation), -(c * t.tx + s * t.ty), -(-s * t.tx + c * t.ty)};
}

RigidTransform2D pose_to_world(const Pose2D& pose) {
  return {wrap_angle(pose.theta), pose.x, pose.y};
}

RigidTransform2D relative_pose(const Pose2D& ego, const Pose2D& other) {
  return compose(inverse(pose_to_world(ego)), pose_to_world(other));
}

namespace {

bool all_finite(const PointSet2D& pts) {
  for (const Point2D& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  }
  return true;
}

}  // namespace

RigidTransform2D rigid_fit(const PointSet2D& src, const PointSet2D& dst) {
  if (src.size() != dst.size())
    throw DegenerateInput("rigid_fit: point sets differ in size");
  if (src.size() < 2)
    throw DegenerateInput("rigid_fit: need at least 2 point pairs");
  if (!all_finite(src) || !all_finite(dst))
    throw DegenerateInput("rigid_fit: non-finite coordinate");

  const double n = static_cast<double>(src.size());
  double sx = 0, sy = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < src.size(); ++i) {
    sx += src[i].x;
    sy += src[i].y;
    dx += dst[i].x;
    dy += dst[i].y;
  }
  sx /= n;
  sy /= n;
  dx /= n;
  dy /= n;

  // 2x2 cross-covariance reduces to two scalars: sum of dots and sum of
  // 2D cross products between centered pairs.
  double dot = 0, cross = 0, spread = 0;
  for (size_t i = 0; i < src.size(); ++i) {
    const double ax = src[i].x - sx, ay = src[i].y - sy;
    const double bx = dst[i].x - dx, by = dst[i].y - dy;
    dot += ax * bx + ay * by;
    cross += ax * by - ay * bx;
    spread += ax * ax + ay * ay;
  }
  if (spread <= 1e-18)
    throw DegenerateInput("rigid_fit: all source points coincide; rotation unidentifiable");

  // If dst collapses to a point every rotation ties; atan2(0,0) is avoided.
  const double rot = (std::abs(dot) + std::abs(cross)) > 0.0 ? std::atan2(cross, dot) : 0.0;
  const double c = std::cos(rot), s = std::sin(rot);
  return {wrap_angle(rot), dx - (c * sx - s * sy), dy - (s * sx + c * sy)};
}

double fit_residual(const RigidTransform2D& t, const PointSet2D& src,
                    const PointSet2D& dst) {
  double sum = 0;
  for (size_t i = 0; i < src.size(); ++i) {
    const Point2D m = apply(t, src[i]);
    const double ex = m.x - dst[i].x, ey = m.y - dst[i].y;
    sum += ex * ex + ey * ey;
  }
  return sum;
}

}  // namespace stalign
