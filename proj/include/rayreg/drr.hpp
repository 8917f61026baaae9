#pragma once

#include <optional>

#include "rayreg/geometry.hpp"
#include "rayreg/image.hpp"
#include "rayreg/volume.hpp"

namespace rayreg {

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }

  PixelRect clipped(int w, int h) const {
    return {std::max(x0, 0), std::max(y0, 0), std::min(x1, w),
            std::min(y1, h)};
  }
};

struct RenderOptions {
  // Integration step along the ray; <= 0 selects 0.5 * min voxel spacing.
  double step_mm = 0.0;
  int threads = 1;

  double effective_step(const Volume& vol) const {
    if (step_mm > 0.0) return step_mm;
    return 0.5 * vol.spacing.minCoeff();
  }
};

// Ray / axis-aligned box intersection (slab method). Returns the entry and
// exit distances along the unit direction, or nothing on a miss. A
// tangential graze with entry == exit counts as a miss.
std::optional<std::pair<double, double>> intersect_aabb(
    const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir,
    const Eigen::Vector3d& box_lo, const Eigen::Vector3d& box_hi);

// Log-domain DRR: for each pixel the ray from the source through the pixel
// center is intersected with the transformed volume's bounding box and the
// attenuation is integrated with a uniform step (midpoint rule),
// value = sum mu(sample) * step. Rays that miss are exactly 0.
//
// `region`, when given, restricts computation to those pixels; the rest of
// the full-size output stays 0 and the computed pixels are bit-identical
// to a full-frame render. Throws PoseError unless 0 < t_z < D.
Image render_drr(const Volume& vol, const TransformParams& t,
                 const ProjectionGeometry& geom, const RenderOptions& opts = {},
                 const std::optional<PixelRect>& region = std::nullopt);

}  // namespace rayreg
