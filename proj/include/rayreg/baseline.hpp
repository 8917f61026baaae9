#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rayreg/drr.hpp"
#include "rayreg/feature.hpp"
#include "rayreg/geometry.hpp"
#include "rayreg/image.hpp"
#include "rayreg/volume.hpp"

namespace rayreg {

// --- Similarity measures -------------------------------------------------

// Mutual information over a joint histogram of the two patches, each
// min-max normalized to [0, 1] before binning (a constant patch maps to
// bin 0). Natural log; zero-count cells contribute nothing.
double mutual_information(const Patch& a, const Patch& b, int bins = 32);

// Gradient correlation: mean of the Pearson correlations of the
// horizontal and vertical central-difference images (interior pixels
// only). A zero-variance gradient image contributes 0.
double gradient_correlation(const Patch& a, const Patch& b);

// --- Powell direction-set minimizer --------------------------------------

struct PowellConfig {
  // Initial direction scaling, one entry per dimension; empty => unit.
  std::vector<double> scales;
  double ftol = 1e-9;        // relative decrease convergence threshold
  double line_tol = 1e-4;    // Brent line-search relative tolerance
  int max_iter = 100;        // direction-set cycles
  long max_evals = 200000;
};

struct PowellResult {
  std::vector<double> x;
  double f = 0.0;
  int n_iter = 0;
  long n_evals = 0;
  bool converged = false;
  std::vector<double> eval_trace;  // objective at every evaluation
};

using Objective = std::function<double(const std::vector<double>&)>;

// Powell's method with bracketing + Brent line minimization. Deterministic:
// no randomness, fixed direction replacement rule (drop the direction of
// largest decrease when the Powell criterion accepts the extrapolation).
PowellResult powell_minimize(const Objective& f, std::vector<double> x0,
                             const PowellConfig& cfg);

// --- Intensity-based registration ----------------------------------------

enum class BaselineMethod { MI, GC, MIGC };

BaselineMethod baseline_method_from_string(const std::string& s);
std::string to_string(BaselineMethod m);

struct BaselineConfig {
  PowellConfig powell;   // scales default to (1, 1, 10, 2, 10, 10) if empty
  int mi_bins = 32;
  RoiSpec roi;
  RenderOptions render;
};

struct BaselineOutcome {
  TransformParams t_est;
  double similarity = 0.0;   // value at the optimum (maximized measure)
  long n_evals = 0;          // objective evaluations (= DRR renders)
  int n_iter = 0;
  std::vector<double> eval_trace;
};

// Maximizes the similarity between the fixed image and the DRR rendered at
// the candidate pose, comparing patches under the ROI derived from the
// candidate. MIGC runs an MI stage then re-optimizes with GC from its
// optimum; its counters are the stage sums.
BaselineOutcome register_baseline(BaselineMethod method, const Volume& vol,
                                  const Image& xray,
                                  const ProjectionGeometry& geom,
                                  const TransformParams& t_init,
                                  const BaselineConfig& cfg);

}  // namespace rayreg
