#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rayreg/drr.hpp"
#include "rayreg/geometry.hpp"
#include "rayreg/image.hpp"
#include "rayreg/rng.hpp"
#include "rayreg/volume.hpp"

namespace rayreg {

// --- Target registration error in the projection plane -------------------

// Mean over the eight corners of the projected distance between the corner
// under the estimated and ground-truth poses. Each corner's displacement
// is measured on the detector and rescaled by z_gt/D for that corner, so a
// pure in-plane translation (dx, dy) yields exactly sqrt(dx^2 + dy^2).
// Corners are object-local (same frame as the rotation center).
double mtre_proj(const TransformParams& t_est, const TransformParams& t_gt,
                 const std::array<Eigen::Vector3d, 8>& corners,
                 const Eigen::Vector3d& rotation_center,
                 const ProjectionGeometry& geom);

double mtre_proj(const TransformParams& t_est, const TransformParams& t_gt,
                 const Volume& vol, const ProjectionGeometry& geom);

// Success threshold: 1% of the object bounding-box diagonal.
double success_threshold_mm(const Volume& vol);

// --- Perturbation protocol -----------------------------------------------

struct PerturbSpec {
  // Gaussian std devs in as_array() order: x, y, z (mm), theta, alpha,
  // beta (deg).
  std::array<double, 6> stds = {1.0, 1.0, 10.0, 2.0, 10.0, 10.0};
  int count = 140;
  std::uint64_t seed = 0;
};

// Six normal draws in as_array() order, added to the ground truth.
TransformParams perturb(const TransformParams& t_gt, const PerturbSpec& spec,
                        Rng& rng);

// Sub-seed of perturbation k; recorded per trial so rows are traceable to
// their stream.
std::uint64_t trial_seed(std::uint64_t base_seed, int k);

// Perturbation k of the paired stream: every method sees the same starting
// pose for the same (spec.seed, k).
TransformParams perturbation(const TransformParams& t_gt,
                             const PerturbSpec& spec, int k);

// Additive Gaussian noise with std sigma_pct/100 of the image value range.
Image add_gaussian_noise(const Image& img, double sigma_pct,
                         std::uint64_t seed);

// --- Experiment harness --------------------------------------------------

struct EvalCase {
  std::string id;
  TransformParams t_gt;
  double noise_sigma_pct = 0.0;
  std::uint64_t noise_seed = 0;
};

struct RegRun {
  TransformParams t_est;
  long n_drr_evals = 0;
};

struct MethodSpec {
  std::string name;
  std::function<RegRun(const Image& xray, const TransformParams& t_init)> run;
};

struct TrialRecord {
  std::string method;
  std::string case_id;
  int trial_id = 0;
  std::uint64_t seed = 0;  // perturbation sub-seed, shared across methods
  TransformParams t_init, t_est;
  double mtreproj_mm = 0.0;
  bool success = false;
  double wall_time_s = 0.0;
  long n_drr_evals = 0;
  bool failed = false;  // method threw; counted as unsuccessful
};

struct MethodSummary {
  std::string method;
  int n_trials = 0;
  int n_success = 0;
  double success_rate = 0.0;
  double mean_mtreproj_mm = 0.0;  // over successful trials; NaN when none
  double time_mean_s = 0.0;
  double time_std_s = 0.0;
};

struct ExperimentReport {
  double threshold_mm = 0.0;
  std::vector<TrialRecord> trials;
  std::vector<MethodSummary> summaries;
};

// Runs every method on every (case, perturbation) pair. Trials are ordered
// case-major, then perturbation, then method; methods share the perturbed
// starting pose and the noisy target image of each trial. Trials run
// sequentially so wall times are comparable; timing wraps the method call
// only. Per-trial exceptions become failed rows, never aborts. When
// out_dir is given, report.csv and report.json are written there.
ExperimentReport run_experiment(
    const std::vector<MethodSpec>& methods, const Volume& vol,
    const ProjectionGeometry& geom, const std::vector<EvalCase>& cases,
    const PerturbSpec& perturb, const RenderOptions& render,
    const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// Aggregates recomputed from rows alone (used to cross-check reports).
std::vector<MethodSummary> summarize(const std::vector<TrialRecord>& trials,
                                     double threshold_mm);

void write_report_csv(const ExperimentReport& report,
                      const std::filesystem::path& path);
void write_report_json(const ExperimentReport& report,
                       const std::filesystem::path& path);
std::vector<TrialRecord> read_trials_csv(const std::filesystem::path& path);

}  // namespace rayreg
