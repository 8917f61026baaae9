#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rayreg/drr.hpp"
#include "rayreg/feature.hpp"
#include "rayreg/geometry.hpp"
#include "rayreg/nn.hpp"
#include "rayreg/rng.hpp"
#include "rayreg/volume.hpp"

namespace rayreg {

// Out-of-plane rotation zone grid over (alpha, beta). Each zone gets its
// own set of regressors; dispatch is by floor division of the normalized
// angles, clamped to the grid.
struct ZoneGrid {
  int n_alpha = 18;
  int n_beta = 18;
  double span_alpha_deg = 20.0;
  double span_beta_deg = 20.0;
  double origin_alpha_deg = -180.0;
  double origin_beta_deg = -180.0;

  struct Index {
    int i = 0, j = 0;
    bool operator==(const Index&) const = default;
    bool operator<(const Index& o) const {
      return i != o.i ? i < o.i : j < o.j;
    }
  };

  void validate() const;
  Index zone_of(double alpha_deg, double beta_deg) const;
  std::pair<double, double> alpha_range(int i) const;  // [lo, hi)
  std::pair<double, double> beta_range(int j) const;

  // 1x1 grid covering alpha, beta in [-half_span, half_span).
  static ZoneGrid single(double half_span_deg);
};

// Parameter groups of the hierarchical regression, in estimation order:
//   group 1: in-plane {t_x, t_y, t_theta}
//   group 2: out-of-plane rotations {t_alpha, t_beta}
//   group 3: out-of-plane translation {t_z}
// members indexes into TransformParams::as_array() order
// (x, y, z, theta, alpha, beta). delta_half gives the half-range of the
// uniform offset draw for each of the six components when synthesizing
// this group's training set; label_half normalizes labels to [-1, 1].
struct GroupSpec {
  int id = 1;
  std::vector<int> members;
  std::array<double, 6> delta_half{};
  std::vector<double> label_half;
};

GroupSpec group_spec(int id);

// Nominal parameter ranges the system is trained to cover. In-plane
// translations and rotation are drawn uniformly over these; alpha/beta
// are drawn within the target zone; t_z over [z_min, z_max].
struct NominalRanges {
  double x_half_mm = 10.0;
  double y_half_mm = 10.0;
  double z_min_mm = 400.0;
  double z_max_mm = 600.0;
  double theta_half_deg = 30.0;
};

struct SynthConfig {
  ZoneGrid grid;
  RoiSpec roi;
  NominalRanges nominal;
  RenderOptions render;
  ProjectionGeometry geom;
};

// Ground-truth pose draw for one training sample of the given zone.
// Consumes six uniform draws in as_array() order.
TransformParams draw_params(const SynthConfig& cfg, ZoneGrid::Index zone,
                            Rng& rng);

// Offset draw for one group; six uniform draws in as_array() order.
TransformParams draw_delta(const GroupSpec& group, Rng& rng);

struct TrainingSample {
  Patch feature;               // standardized residual
  std::vector<double> label;   // normalized to [-1, 1]
  TransformParams t, t_delta;
};

// Renders the synthetic target at t, the moving image at t + delta, and
// forms the residual feature under the displaced ROI. Labels are the
// group components of delta scaled by label_half.
TrainingSample training_pair(const Volume& vol, const SynthConfig& cfg,
                             const GroupSpec& group, const TransformParams& t,
                             const TransformParams& delta);

// Draws (t, delta) from the per-sample stream Rng::stream(seed, index)
// and builds the pair. Identical for any thread count.
TrainingSample synthesize_sample(const Volume& vol, const SynthConfig& cfg,
                                 ZoneGrid::Index zone, const GroupSpec& group,
                                 std::uint64_t seed, std::size_t index);

Dataset synthesize_dataset(const Volume& vol, const SynthConfig& cfg,
                           ZoneGrid::Index zone, const GroupSpec& group,
                           std::size_t n, std::uint64_t seed, int threads = 1);

// Dataset on disk: manifest JSON + features (f32le) + labels (f64le),
// samples in index order. The manifest echoes the generation config.
void write_dataset(const Dataset& data, const SynthConfig& cfg,
                   ZoneGrid::Index zone, int group, std::uint64_t seed,
                   const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// --- Regressor bank ------------------------------------------------------

struct BankEntry {
  Network net;
  ModelMeta meta;
};

struct RegressorBank {
  ZoneGrid grid;
  RoiSpec roi;
  RenderOptions render;
  std::map<std::pair<ZoneGrid::Index, int>, BankEntry> models;

  // Throws CoverageError naming the missing (zone, group).
  const BankEntry& model(ZoneGrid::Index zone, int group) const;
  bool has(ZoneGrid::Index zone, int group) const;
};

struct BankTrainConfig {
  NetConfig arch;        // in_rows/in_cols/n_out filled per group
  TrainConfig train;
  std::size_t n_samples = 25000;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Trains one group for one zone and stores it in the bank. Per-model
// seeds derive from cfg.seed and the (zone, group) key.
void train_zone_group(RegressorBank& bank, const Volume& vol,
                      const SynthConfig& scfg, ZoneGrid::Index zone, int group,
                      const BankTrainConfig& cfg);

// All three groups of one zone.
void train_zone(RegressorBank& bank, const Volume& vol, const SynthConfig& scfg,
                ZoneGrid::Index zone, const BankTrainConfig& cfg);

void save_bank(const RegressorBank& bank, const std::filesystem::path& dir);
RegressorBank load_bank(const std::filesystem::path& dir);

// --- Registration --------------------------------------------------------

struct GroupStep {
  int group = 0;
  TransformParams before, after;
};

struct RegressOptions {
  int passes = 1;
  int threads = 1;
};

// One hierarchical pass: dispatch zone from the initial alpha/beta, then
// apply groups 1..3, re-extracting the feature after each update.
// Throws CoverageError if the dispatched zone has no models.
TransformParams regress_once(const RegressorBank& bank, const Volume& vol,
                             const Image& xray, const ProjectionGeometry& geom,
                             const TransformParams& t_init, int threads = 1,
                             std::vector<GroupStep>* steps = nullptr);

struct RegressResult {
  TransformParams t_est;
  std::vector<TransformParams> trajectory;  // estimate after each pass
  std::vector<GroupStep> steps;
};

// Multiple passes; the zone is re-dispatched from the running estimate at
// the start of every pass.
RegressResult regress_multipass(const RegressorBank& bank, const Volume& vol,
                                const Image& xray,
                                const ProjectionGeometry& geom,
                                const TransformParams& t_init,
                                const RegressOptions& opt);

}  // namespace rayreg
