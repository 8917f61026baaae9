#include "rayreg/geometry.hpp"

#include <cmath>

#include "rayreg/volume.hpp"

namespace rayreg {

bool TransformParams::finite() const {
  for (double v : as_array()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void ProjectionGeometry::validate() const {
  if (!(source_detector_mm > 0.0)) {
    throw InvalidParameterError("source_detector_mm must be > 0");
  }
  if (det_width_px <= 0 || det_height_px <= 0) {
    throw InvalidParameterError("detector size must be positive");
  }
  if (!(pixel_spacing_mm > 0.0)) {
    throw InvalidParameterError("pixel_spacing_mm must be > 0");
  }
}

RigidPose pose_from_params(const TransformParams& t,
                           const Eigen::Vector3d& center) {
  if (!t.finite()) throw PoseError("non-finite transformation parameters");
  const Eigen::Matrix3d rz =
      Eigen::AngleAxisd(deg_to_rad(t.t_theta), Eigen::Vector3d::UnitZ())
          .toRotationMatrix();
  const Eigen::Matrix3d rx =
      Eigen::AngleAxisd(deg_to_rad(t.t_alpha), Eigen::Vector3d::UnitX())
          .toRotationMatrix();
  const Eigen::Matrix3d ry =
      Eigen::AngleAxisd(deg_to_rad(t.t_beta), Eigen::Vector3d::UnitY())
          .toRotationMatrix();
  RigidPose pose;
  pose.rotation = rz * rx * ry;
  const Eigen::Vector3d t_vec(t.t_x, t.t_y, t.t_z);
  pose.translation = t_vec - pose.rotation * center;
  return pose;
}

Eigen::Vector2d project_point(const Eigen::Vector3d& p,
                              const ProjectionGeometry& geom) {
  geom.validate();
  if (!(p.z() > 0.0)) {
    throw BehindSourceError("cannot project point with z <= 0");
  }
  const double s = geom.source_detector_mm / p.z();
  return {s * p.x(), s * p.y()};
}

std::array<Eigen::Vector3d, 8> BoundingBox::corners() const {
  std::array<Eigen::Vector3d, 8> c;
  for (int k = 0; k < 8; ++k) {
    c[k] = Eigen::Vector3d((k & 1) ? hi.x() : lo.x(), (k & 2) ? hi.y() : lo.y(),
                           (k & 4) ? hi.z() : lo.z());
  }
  return c;
}

BoundingBox object_bbox(const Volume& vol) {
  int x0 = vol.nx, y0 = vol.ny, z0 = vol.nz;
  int x1 = -1, y1 = -1, z1 = -1;
  for (int z = 0; z < vol.nz; ++z) {
    for (int y = 0; y < vol.ny; ++y) {
      for (int x = 0; x < vol.nx; ++x) {
        if (vol.at(x, y, z) > 0.0f) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          z0 = std::min(z0, z);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
          z1 = std::max(z1, z);
        }
      }
    }
  }
  if (x1 < 0) throw EmptyObjectError("volume has no attenuating voxels");
  return {vol.voxel_center(x0, y0, z0), vol.voxel_center(x1, y1, z1)};
}

}  // namespace rayreg
