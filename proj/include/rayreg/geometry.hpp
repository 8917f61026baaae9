#pragma once

#include <Eigen/Dense>
#include <array>

#include "rayreg/common.hpp"

namespace rayreg {

struct Volume;

// The 6 transformation parameters: in-plane (t_x, t_y, t_theta) and
// out-of-plane (t_z, t_alpha, t_beta). Translations in mm, angles in
// degrees. t_z is the depth of the object gravity center along the
// projection axis, measured from the source.
struct TransformParams {
  double t_x = 0.0;
  double t_y = 0.0;
  double t_z = 0.0;
  double t_theta = 0.0;
  double t_alpha = 0.0;
  double t_beta = 0.0;

  std::array<double, 6> as_array() const {
    return {t_x, t_y, t_z, t_theta, t_alpha, t_beta};
  }
  static TransformParams from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }

  // All angles wrapped into [-180, 180).
  TransformParams normalized() const {
    TransformParams t = *this;
    t.t_theta = normalize_angle_deg(t.t_theta);
    t.t_alpha = normalize_angle_deg(t.t_alpha);
    t.t_beta = normalize_angle_deg(t.t_beta);
    return t;
  }

  bool finite() const;
};

// Pinhole projection geometry: point source at the world origin, +z toward
// the detector, detector plane at z = D with u || x (columns, rightward)
// and v || y (rows, downward). principal_point is the continuous pixel
// coordinate where the projection axis meets the detector; pixel (i, j)
// has its center at pixel coordinate (i + 0.5, j + 0.5), top-left origin.
struct ProjectionGeometry {
  double source_detector_mm = 1000.0;  // D
  int det_width_px = 1024;
  int det_height_px = 1024;
  double pixel_spacing_mm = 0.223;
  double principal_x_px = -1.0;  // negative: default to detector center
  double principal_y_px = -1.0;

  double principal_x() const {
    return principal_x_px >= 0.0 ? principal_x_px : 0.5 * det_width_px;
  }
  double principal_y() const {
    return principal_y_px >= 0.0 ? principal_y_px : 0.5 * det_height_px;
  }

  void validate() const;

  Eigen::Vector2d mm_to_px(const Eigen::Vector2d& mm) const {
    return {mm.x() / pixel_spacing_mm + principal_x(),
            mm.y() / pixel_spacing_mm + principal_y()};
  }
  Eigen::Vector2d px_to_mm(const Eigen::Vector2d& px) const {
    return {(px.x() - principal_x()) * pixel_spacing_mm,
            (px.y() - principal_y()) * pixel_spacing_mm};
  }
};

// Rigid map p -> rotation * p + translation (world mm).
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

// Builds the rigid pose for parameters t, rotating about `center` (the
// object gravity center in object-local mm):
//   p -> R * (p - center) + (t_x, t_y, t_z),
// with R = Rz(t_theta) * Rx(t_alpha) * Ry(t_beta). The in-plane rotation
// is applied last so t_theta equals the in-plane image orientation.
RigidPose pose_from_params(const TransformParams& t,
                           const Eigen::Vector3d& center);

// Perspective projection of a world point onto the detector plane, in mm
// relative to the principal point. Throws BehindSourceError for p_z <= 0.
Eigen::Vector2d project_point(const Eigen::Vector3d& p,
                              const ProjectionGeometry& geom);

// Tight axis-aligned bounding box of voxels with attenuation > 0, in
// object-local mm (voxel-center extent).
struct BoundingBox {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();

  // Corner order: x varies fastest, then y, then z.
  std::array<Eigen::Vector3d, 8> corners() const;
  double diagonal() const { return (hi - lo).norm(); }
};

// Throws EmptyObjectError if no voxel has attenuation > 0.
BoundingBox object_bbox(const Volume& vol);

}  // namespace rayreg
