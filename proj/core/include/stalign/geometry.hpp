#pragma once

#include <vector>

namespace stalign {

inline constexpr double kPi = 3.14159265358979323846;

/// Normalize an angle into (-pi, pi].
double wrap_angle(double rad);

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

using PointSet2D = std::vector<Point2D>;

/// Planar pose: position plus heading, heading always in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Rotation-then-translation map between two planar frames.
struct RigidTransform2D {
  double rotation = 0.0;  // radians in (-pi, pi]
  double tx = 0.0;
  double ty = 0.0;

  static RigidTransform2D identity() { return {}; }
};

Point2D apply(const RigidTransform2D& t, const Point2D& p);

/// Applies t to every point: rotate by t.rotation, then translate.
PointSet2D apply_transform(const RigidTransform2D& t, const PointSet2D& pts);

/// a-after-b: compose(a, b) maps p to a(b(p)).
RigidTransform2D compose(const RigidTransform2D& a, const RigidTransform2D& b);

RigidTransform2D inverse(const RigidTransform2D& t);

/// Transform mapping local coordinates of `pose` into the world frame.
RigidTransform2D pose_to_world(const Pose2D& pose);

/// Transform mapping points in `other`'s frame into `ego`'s frame.
/// relative_pose(p, p) is the identity.
RigidTransform2D relative_pose(const Pose2D& ego, const Pose2D& other);

/// Least-squares rigid alignment: returns the rotation+translation minimizing
/// sum ||T(src_i) - dst_i||^2 (centroid subtraction, 2x2 cross-covariance,
/// angle from atan2; reflections excluded).
///
/// Throws DegenerateInput when |src| != |dst|, fewer than 2 points, all src
/// points coincide, or any coordinate is non-finite.
RigidTransform2D rigid_fit(const PointSet2D& src, const PointSet2D& dst);

/// Sum of squared residuals of T between src and dst.
double fit_residual(const RigidTransform2D& t, const PointSet2D& src,
                    const PointSet2D& dst);

}  // namespace stalign
