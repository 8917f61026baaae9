#include "rayreg/feature.hpp"

#include <cmath>

namespace rayreg {

void RoiSpec::validate() const {
  if (!(w0_mm > 0.0) || !(h0_mm > 0.0)) {
    throw InvalidParameterError("ROI object-plane size must be positive");
  }
  if (patch_rows <= 0 || patch_cols <= 0) {
    throw InvalidParameterError("patch resolution must be positive");
  }
}

Roi compute_roi(const TransformParams& t, const ProjectionGeometry& geom,
                const RoiSpec& spec) {
  geom.validate();
  spec.validate();
  if (!t.finite()) throw PoseError("non-finite transformation parameters");
  if (!(t.t_z > 0.0 && t.t_z < geom.source_detector_mm)) {
    throw PoseError("t_z must lie strictly between source and detector");
  }
  const double mag = geom.source_detector_mm / t.t_z;
  Roi roi;
  roi.center_mm = {mag * t.t_x, mag * t.t_y};
  roi.width_mm = spec.w0_mm * mag;
  roi.height_mm = spec.h0_mm * mag;
  roi.phi_deg = t.t_theta;
  return roi;
}

Eigen::Vector2d roi_sample_mm(const Roi& roi, int row, int col, int rows,
                              int cols) {
  const double phi = deg_to_rad(roi.phi_deg);
  const Eigen::Vector2d u(std::cos(phi), std::sin(phi));
  const Eigen::Vector2d v(-std::sin(phi), std::cos(phi));
  const double a = ((col + 0.5) / cols - 0.5) * roi.width_mm;
  const double b = ((row + 0.5) / rows - 0.5) * roi.height_mm;
  return roi.center_mm + a * u + b * v;
}

Patch extract_patch(const Image& img, const Roi& roi, const RoiSpec& spec,
                    const ProjectionGeometry& geom) {
  spec.validate();
  if (img.width != geom.det_width_px || img.height != geom.det_height_px) {
    throw ShapeError("image size does not match the detector");
  }
  Patch patch(spec.patch_rows, spec.patch_cols);
  for (int r = 0; r < spec.patch_rows; ++r) {
    for (int c = 0; c < spec.patch_cols; ++c) {
      const Eigen::Vector2d mm =
          roi_sample_mm(roi, r, c, spec.patch_rows, spec.patch_cols);
      const Eigen::Vector2d px = geom.mm_to_px(mm);
      const double gx = px.x() - 0.5, gy = px.y() - 0.5;
      if (!(gx >= 0.0 && gx <= img.width - 1 && gy >= 0.0 &&
            gy <= img.height - 1)) {
        patch.out_of_field = true;
      }
      patch.at(r, c) = sample_bilinear_px(img, px.x(), px.y());
    }
  }
  return patch;
}

Patch standardize_patch(const Patch& p) {
  const std::size_t n = p.values.size();
  if (n == 0) throw InvalidParameterError("cannot standardize an empty patch");
  double mean = 0.0;
  for (double v : p.values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : p.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);

  Patch out = p;
  out.norm_mean = mean;
  out.norm_std = sd;
  if (sd < 1e-6) {
    // Flat patch: no contrast to normalize, map to all zeros.
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (double& v : out.values) v = (v - mean) / sd;
  return out;
}

PixelRect roi_footprint_px(const Roi& roi, const RoiSpec& spec,
                           const ProjectionGeometry& geom) {
  const double phi = deg_to_rad(roi.phi_deg);
  const Eigen::Vector2d u(std::cos(phi), std::sin(phi));
  const Eigen::Vector2d v(-std::sin(phi), std::cos(phi));
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  bool first = true;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      const Eigen::Vector2d mm = roi.center_mm +
                                 sx * 0.5 * roi.width_mm * u +
                                 sy * 0.5 * roi.height_mm * v;
      const Eigen::Vector2d px = geom.mm_to_px(mm);
      if (first || px.x() < min_x) min_x = px.x();
      if (first || px.x() > max_x) max_x = px.x();
      if (first || px.y() < min_y) min_y = px.y();
      if (first || px.y() > max_y) max_y = px.y();
      first = false;
    }
  }
  (void)spec;
  // Bilinear support of a sample at px touches floor(px - 0.5) and the next
  // pixel; pad one extra pixel of slack on each side.
  PixelRect rect;
  rect.x0 = static_cast<int>(std::floor(min_x - 0.5)) - 1;
  rect.y0 = static_cast<int>(std::floor(min_y - 0.5)) - 1;
  rect.x1 = static_cast<int>(std::floor(max_x - 0.5)) + 3;
  rect.y1 = static_cast<int>(std::floor(max_y - 0.5)) + 3;
  return rect;
}

Feature feature_residual(const TransformParams& t, const Image& xray,
                         const Volume& vol, const ProjectionGeometry& geom,
                         const RoiSpec& spec, const RenderOptions& render) {
  Feature feat;
  feat.params = t;
  feat.roi = compute_roi(t, geom, spec);
  const PixelRect fp = roi_footprint_px(feat.roi, spec, geom)
                           .clipped(geom.det_width_px, geom.det_height_px);
  const Image drr = render_drr(vol, t, geom, render, fp);
  const Patch p_drr = standardize_patch(extract_patch(drr, feat.roi, spec, geom));
  const Patch p_xray =
      standardize_patch(extract_patch(xray, feat.roi, spec, geom));
  feat.out_of_field = p_drr.out_of_field || p_xray.out_of_field;
  feat.residual = Patch(spec.patch_rows, spec.patch_cols);
  feat.residual.out_of_field = feat.out_of_field;
  for (std::size_t i = 0; i < feat.residual.values.size(); ++i) {
    feat.residual.values[i] = p_drr.values[i] - p_xray.values[i];
  }
  return feat;
}

RoiSpec default_roi_spec(const Volume& vol, double factor, int patch_rows,
                         int patch_cols) {
  if (!(factor > 0.0)) throw InvalidParameterError("ROI factor must be > 0");
  const double diag = object_bbox(vol).diagonal();
  RoiSpec spec;
  spec.w0_mm = factor * diag;
  spec.h0_mm = factor * diag;
  spec.patch_rows = patch_rows;
  spec.patch_cols = patch_cols;
  spec.validate();
  return spec;
}

}  // namespace rayreg
