#pragma once

#include <vector>

#include "rayreg/drr.hpp"
#include "rayreg/geometry.hpp"
#include "rayreg/image.hpp"
#include "rayreg/volume.hpp"

namespace rayreg {

// Oriented rectangle on the detector, mm units. The orientation equals the
// in-plane rotation of the generating parameters, so the ROI stays aligned
// with the object.
struct Roi {
  Eigen::Vector2d center_mm = Eigen::Vector2d::Zero();  // q
  double width_mm = 0.0;                                // w, along u(phi)
  double height_mm = 0.0;                               // h, along v(phi)
  double phi_deg = 0.0;
};

// Object-plane ROI size and the fixed patch resolution it is resampled to.
// Rows run along the ROI height, columns along the width.
struct RoiSpec {
  double w0_mm = 0.0;
  double h0_mm = 0.0;
  int patch_rows = 156;
  int patch_cols = 300;

  void validate() const;
};

// Fixed-size resampled ROI patch. Stored row-major, double precision.
struct Patch {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  bool out_of_field = false;  // any sample fell outside the detector
  double norm_mean = 0.0;     // standardization record
  double norm_std = 1.0;

  Patch() = default;
  Patch(int r, int c) : rows(r), cols(c), values(std::size_t(r) * c, 0.0) {}

  double at(int r, int c) const { return values[std::size_t(r) * cols + c]; }
  double& at(int r, int c) { return values[std::size_t(r) * cols + c]; }
};

// Residual feature: difference of the standardized DRR and X-ray patches
// extracted through the same ROI. Records the generating parameters.
struct Feature {
  Patch residual;
  TransformParams params;
  Roi roi;
  bool out_of_field = false;
};

// ROI for parameters t: centered at the projected gravity center
// (D*t_x/t_z, D*t_y/t_z), sized w = w0*D/t_z, h = h0*D/t_z, oriented at
// phi = t_theta. Throws PoseError unless 0 < t_z < D.
Roi compute_roi(const TransformParams& t, const ProjectionGeometry& geom,
                const RoiSpec& spec);

// Positions of the patch sample grid: cell centers of a rows x cols grid
// spanning the rotated rectangle. Sample (r, c) sits at
//   q + ((c+0.5)/cols - 0.5) * w * u(phi) + ((r+0.5)/rows - 0.5) * h * v(phi)
// with u(phi) = (cos, sin) and v(phi) = (-sin, cos), detector mm.
Eigen::Vector2d roi_sample_mm(const Roi& roi, int row, int col, int rows,
                              int cols);

// Extracts and resamples the ROI from a detector image via bilinear
// interpolation in pixel space. Samples outside the pixel-center lattice
// return 0 and set the out-of-field flag.
Patch extract_patch(const Image& img, const Roi& roi, const RoiSpec& spec,
                    const ProjectionGeometry& geom);

// Zero mean, unit std (guard eps = 1e-6: flat patches map to all-zero).
Patch standardize_patch(const Patch& p);

// Detector-pixel bounding rectangle of the ROI sample grid including the
// bilinear support margin; render target for ROI-restricted DRRs.
PixelRect roi_footprint_px(const Roi& roi, const RoiSpec& spec,
                           const ProjectionGeometry& geom);

// The regression feature X: renders the DRR at t restricted to the ROI
// footprint, extracts and standardizes the DRR and X-ray patches through
// the same ROI, and returns their difference.
Feature feature_residual(const TransformParams& t, const Image& xray,
                         const Volume& vol, const ProjectionGeometry& geom,
                         const RoiSpec& spec, const RenderOptions& render = {});

// Square object-plane ROI covering the object with margin: w0 = h0 =
// factor * bounding-box diagonal.
RoiSpec default_roi_spec(const Volume& vol, double factor = 1.2,
                         int patch_rows = 156, int patch_cols = 300);

}  // namespace rayreg
