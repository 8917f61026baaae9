#include "rayreg/drr.hpp"

#include <cmath>

#include "rayreg/threading.hpp"

namespace rayreg {

std::optional<std::pair<double, double>> intersect_aabb(
    const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir,
    const Eigen::Vector3d& box_lo, const Eigen::Vector3d& box_hi) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray_origin[a], d = ray_dir[a];
    if (d == 0.0) {
      // Parallel to this slab; boundary contact counts as a miss.
      if (!(o > box_lo[a] && o < box_hi[a])) return std::nullopt;
      continue;
    }
    double t1 = (box_lo[a] - o) / d;
    double t2 = (box_hi[a] - o) / d;
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (!(t_near < t_far)) return std::nullopt;  // graze (==) is a miss
  return std::make_pair(t_near, t_far);
}

namespace {

// Trilinear fetch in continuous voxel coordinates; same semantics as
// sample_trilinear but skips the mm -> voxel conversion per sample.
inline double sample_vox(const Volume& vol, double gx, double gy, double gz) {
  if (!(gx >= 0.0 && gx <= vol.nx - 1 && gy >= 0.0 && gy <= vol.ny - 1 &&
        gz >= 0.0 && gz <= vol.nz - 1)) {
    return 0.0;
  }
  const int x0 = std::min(static_cast<int>(gx), vol.nx - 2);
  const int y0 = std::min(static_cast<int>(gy), vol.ny - 2);
  const int z0 = std::min(static_cast<int>(gz), vol.nz - 2);
  const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
  const float* base = vol.data.data();
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(vol.nx);
  const std::size_t sz = sy * static_cast<std::size_t>(vol.ny);
  const float* p = base + x0 * sx + y0 * sy + z0 * sz;
  const double c000 = p[0], c100 = p[sx];
  const double c010 = p[sy], c110 = p[sy + sx];
  const double c001 = p[sz], c101 = p[sz + sx];
  const double c011 = p[sz + sy], c111 = p[sz + sy + sx];
  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

}  // namespace

Image render_drr(const Volume& vol, const TransformParams& t,
                 const ProjectionGeometry& geom, const RenderOptions& opts,
                 const std::optional<PixelRect>& region) {
  geom.validate();
  if (!t.finite()) throw PoseError("non-finite transformation parameters");
  if (!(t.t_z > 0.0 && t.t_z < geom.source_detector_mm)) {
    throw PoseError("t_z must lie strictly between source and detector");
  }
  if (vol.nx < 2 || vol.ny < 2 || vol.nz < 2) {
    throw InvalidParameterError("volume must be at least 2 voxels per axis");
  }

  const double step = opts.effective_step(vol);
  if (!(step > 0.0)) throw InvalidParameterError("integration step must be > 0");

  const RigidPose pose = pose_from_params(t, vol.gravity_center);
  // Rays live in object space: x_obj = R^T (x_world - translation).
  const Eigen::Matrix3d r_inv = pose.rotation.transpose();
  const Eigen::Vector3d src_obj = -(r_inv * pose.translation);

  const Eigen::Vector3d box_lo = vol.lattice_min();
  const Eigen::Vector3d box_hi = vol.lattice_max();
  const Eigen::Vector3d inv_spacing = vol.spacing.cwiseInverse();

  Image out(geom.det_width_px, geom.det_height_px, geom.pixel_spacing_mm,
            ImageProvenance::Drr);
  PixelRect rect =
      region.value_or(PixelRect{0, 0, geom.det_width_px, geom.det_height_px});
  rect = rect.clipped(geom.det_width_px, geom.det_height_px);
  if (rect.empty()) return out;

  const double d_mm = geom.source_detector_mm;
  parallel_for(static_cast<std::size_t>(rect.height()), opts.threads,
               [&](std::size_t r) {
                 const int y = rect.y0 + static_cast<int>(r);
                 const double v_mm =
                     (y + 0.5 - geom.principal_y()) * geom.pixel_spacing_mm;
                 for (int x = rect.x0; x < rect.x1; ++x) {
                   const double u_mm =
                       (x + 0.5 - geom.principal_x()) * geom.pixel_spacing_mm;
                   Eigen::Vector3d dir_world(u_mm, v_mm, d_mm);
                   dir_world.normalize();
                   const Eigen::Vector3d dir = r_inv * dir_world;
                   const auto hit = intersect_aabb(src_obj, dir, box_lo, box_hi);
                   if (!hit) continue;
                   const double t0 = std::max(hit->first, 0.0);
                   const double t1 = hit->second;
                   if (!(t1 > t0)) continue;
                   const double len = t1 - t0;
                   // Uniform step h <= requested step, covering the chord
                   // exactly; midpoint rule.
                   const long m =
                       std::max(1L, static_cast<long>(std::ceil(len / step)));
                   const double h = len / static_cast<double>(m);
                   const Eigen::Vector3d o_vox =
                       (src_obj - vol.origin).cwiseProduct(inv_spacing);
                   const Eigen::Vector3d d_vox = dir.cwiseProduct(inv_spacing);
                   double acc = 0.0;
                   for (long k = 0; k < m; ++k) {
                     const double s = t0 + (static_cast<double>(k) + 0.5) * h;
                     acc += sample_vox(vol, o_vox.x() + s * d_vox.x(),
                                       o_vox.y() + s * d_vox.y(),
                                       o_vox.z() + s * d_vox.z());
                   }
                   out.at(x, y) = static_cast<float>(acc * h);
                 }
               });
  return out;
}

}  // namespace rayreg
