#include "rayreg/regression.hpp"

#include <cmath>

#include "io_util.hpp"
#include "rayreg/threading.hpp"

namespace rayreg {

void ZoneGrid::validate() const {
  if (n_alpha < 1 || n_beta < 1) {
    throw InvalidParameterError("zone grid must have at least one cell");
  }
  if (!(span_alpha_deg > 0.0) || !(span_beta_deg > 0.0)) {
    throw InvalidParameterError("zone span must be positive");
  }
}

ZoneGrid::Index ZoneGrid::zone_of(double alpha_deg, double beta_deg) const {
  validate();
  const double a = normalize_angle_deg(alpha_deg);
  const double b = normalize_angle_deg(beta_deg);
  auto cell = [](double v, double origin, double span, int n) {
    const int i = static_cast<int>(std::floor((v - origin) / span));
    return std::clamp(i, 0, n - 1);
  };
  return {cell(a, origin_alpha_deg, span_alpha_deg, n_alpha),
          cell(b, origin_beta_deg, span_beta_deg, n_beta)};
}

std::pair<double, double> ZoneGrid::alpha_range(int i) const {
  if (i < 0 || i >= n_alpha) throw InvalidParameterError("zone index out of range");
  const double lo = origin_alpha_deg + i * span_alpha_deg;
  return {lo, lo + span_alpha_deg};
}

std::pair<double, double> ZoneGrid::beta_range(int j) const {
  if (j < 0 || j >= n_beta) throw InvalidParameterError("zone index out of range");
  const double lo = origin_beta_deg + j * span_beta_deg;
  return {lo, lo + span_beta_deg};
}

ZoneGrid ZoneGrid::single(double half_span_deg) {
  if (!(half_span_deg > 0.0)) {
    throw InvalidParameterError("zone half span must be positive");
  }
  ZoneGrid g;
  g.n_alpha = g.n_beta = 1;
  g.span_alpha_deg = g.span_beta_deg = 2.0 * half_span_deg;
  g.origin_alpha_deg = g.origin_beta_deg = -half_span_deg;
  return g;
}

GroupSpec group_spec(int id) {
  GroupSpec g;
  g.id = id;
  switch (id) {
    case 1:
      // In-plane: full offset ranges everywhere.
      g.members = {0, 1, 3};
      g.delta_half = {3.0, 3.0, 30.0, 6.0, 30.0, 30.0};
      g.label_half = {3.0, 3.0, 6.0};
      break;
    case 2:
      // Out-of-plane rotations; in-plane already corrected, so their
      // residual offsets are small.
      g.members = {4, 5};
      g.delta_half = {0.4, 0.4, 30.0, 1.0, 30.0, 30.0};
      g.label_half = {30.0, 30.0};
      break;
    case 3:
      // Depth; rotations corrected too.
      g.members = {2};
      g.delta_half = {0.4, 0.4, 30.0, 1.0, 1.5, 1.5};
      g.label_half = {30.0};
      break;
    default:
      throw InvalidParameterError("group id must be 1, 2 or 3");
  }
  return g;
}

TransformParams draw_params(const SynthConfig& cfg, ZoneGrid::Index zone,
                            Rng& rng) {
  cfg.grid.validate();
  const auto [a_lo, a_hi] = cfg.grid.alpha_range(zone.i);
  const auto [b_lo, b_hi] = cfg.grid.beta_range(zone.j);
  TransformParams t;
  t.t_x = rng.uniform_sym(cfg.nominal.x_half_mm);
  t.t_y = rng.uniform_sym(cfg.nominal.y_half_mm);
  t.t_z = rng.uniform(cfg.nominal.z_min_mm, cfg.nominal.z_max_mm);
  t.t_theta = rng.uniform_sym(cfg.nominal.theta_half_deg);
  t.t_alpha = rng.uniform(a_lo, a_hi);
  t.t_beta = rng.uniform(b_lo, b_hi);
  return t;
}

TransformParams draw_delta(const GroupSpec& group, Rng& rng) {
  std::array<double, 6> d;
  for (int i = 0; i < 6; ++i) d[i] = rng.uniform_sym(group.delta_half[i]);
  return TransformParams::from_array(d);
}

TrainingSample training_pair(const Volume& vol, const SynthConfig& cfg,
                             const GroupSpec& group, const TransformParams& t,
                             const TransformParams& delta) {
  const auto ta = t.as_array();
  const auto da = delta.as_array();
  std::array<double, 6> oa;
  for (int i = 0; i < 6; ++i) oa[i] = ta[i] + da[i];
  const TransformParams t_obs = TransformParams::from_array(oa);

  // The network sees the residual between the DRR at the current estimate
  // t and the observed image whose true parameters are t + delta; it
  // learns to predict delta. Both renders are restricted to the estimate's
  // ROI footprint, which is all the feature ever samples.
  const Roi roi = compute_roi(t, cfg.geom, cfg.roi);
  const PixelRect fp =
      roi_footprint_px(roi, cfg.roi, cfg.geom)
          .clipped(cfg.geom.det_width_px, cfg.geom.det_height_px);
  const Image xray = render_drr(vol, t_obs, cfg.geom, cfg.render, fp);
  Feature feat =
      feature_residual(t, xray, vol, cfg.geom, cfg.roi, cfg.render);

  TrainingSample sample;
  sample.t = t;
  sample.t_delta = delta;
  sample.feature = std::move(feat.residual);
  sample.label.resize(group.members.size());
  for (std::size_t k = 0; k < group.members.size(); ++k) {
    sample.label[k] = da[group.members[k]] / group.label_half[k];
  }
  return sample;
}

TrainingSample synthesize_sample(const Volume& vol, const SynthConfig& cfg,
                                 ZoneGrid::Index zone, const GroupSpec& group,
                                 std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::stream(seed, index);
  const TransformParams t = draw_params(cfg, zone, rng);
  const TransformParams delta = draw_delta(group, rng);
  return training_pair(vol, cfg, group, t, delta);
}

Dataset synthesize_dataset(const Volume& vol, const SynthConfig& cfg,
                           ZoneGrid::Index zone, const GroupSpec& group,
                           std::size_t n, std::uint64_t seed, int threads) {
  if (n == 0) throw InvalidParameterError("dataset size must be positive");
  cfg.roi.validate();
  cfg.geom.validate();
  Dataset data;
  data.rows = cfg.roi.patch_rows;
  data.cols = cfg.roi.patch_cols;
  data.n_out = static_cast<int>(group.members.size());
  data.n = n;
  data.label_half = group.label_half;
  const std::size_t fsz = std::size_t(data.rows) * data.cols;
  data.features.assign(n * fsz, 0.0f);
  data.labels.assign(n * group.members.size(), 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const TrainingSample s = synthesize_sample(vol, cfg, zone, group, seed, i);
    float* dst = data.features.data() + i * fsz;
    for (std::size_t k = 0; k < fsz; ++k) {
      dst[k] = static_cast<float>(s.feature.values[k]);
    }
    std::copy(s.label.begin(), s.label.end(),
              data.labels.begin() + i * s.label.size());
  });
  return data;
}

namespace {

detail::json synth_config_json(const SynthConfig& cfg) {
  detail::json j;
  j["grid"] = {{"n_alpha", cfg.grid.n_alpha},
               {"n_beta", cfg.grid.n_beta},
               {"span_alpha_deg", cfg.grid.span_alpha_deg},
               {"span_beta_deg", cfg.grid.span_beta_deg},
               {"origin_alpha_deg", cfg.grid.origin_alpha_deg},
               {"origin_beta_deg", cfg.grid.origin_beta_deg}};
  j["roi"] = {{"w0_mm", cfg.roi.w0_mm},
              {"h0_mm", cfg.roi.h0_mm},
              {"patch_rows", cfg.roi.patch_rows},
              {"patch_cols", cfg.roi.patch_cols}};
  j["nominal"] = {{"x_half_mm", cfg.nominal.x_half_mm},
                  {"y_half_mm", cfg.nominal.y_half_mm},
                  {"z_min_mm", cfg.nominal.z_min_mm},
                  {"z_max_mm", cfg.nominal.z_max_mm},
                  {"theta_half_deg", cfg.nominal.theta_half_deg}};
  j["render"] = {{"step_mm", cfg.render.step_mm}};
  j["geom"] = {{"D_mm", cfg.geom.source_detector_mm},
               {"det_px", {cfg.geom.det_width_px, cfg.geom.det_height_px}},
               {"pixel_spacing_mm", cfg.geom.pixel_spacing_mm},
               {"principal_point_px",
                {cfg.geom.principal_x(), cfg.geom.principal_y()}}};
  return j;
}

}  // namespace

void write_dataset(const Dataset& data, const SynthConfig& cfg,
                   ZoneGrid::Index zone, int group, std::uint64_t seed,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::json j;
  j["format"] = "rayreg-dataset";
  j["version"] = 1;
  j["n"] = data.n;
  j["rows"] = data.rows;
  j["cols"] = data.cols;
  j["n_out"] = data.n_out;
  j["label_half"] = data.label_half;
  j["zone"] = {zone.i, zone.j};
  j["group"] = group;
  j["seed"] = seed;
  j["features_file"] = "features.f32";
  j["labels_file"] = "labels.f64";
  j["config"] = synth_config_json(cfg);
  detail::write_json_file(j, dir / "dataset.json");
  detail::write_raw(data.features, dir / "features.f32");
  detail::write_raw(data.labels, dir / "labels.f64");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto j = detail::read_json_file(dir / "dataset.json");
  try {
    detail::require(j.at("format") == "rayreg-dataset",
                    "not a dataset: " + dir.string());
    Dataset data;
    data.n = j.at("n");
    data.rows = j.at("rows");
    data.cols = j.at("cols");
    data.n_out = j.at("n_out");
    data.label_half = j.at("label_half").get<std::vector<double>>();
    detail::require(data.n > 0 && data.rows > 0 && data.cols > 0 &&
                        data.n_out > 0,
                    "bad dataset dimensions in " + dir.string());
    detail::require(
        data.label_half.size() == static_cast<std::size_t>(data.n_out),
        "label_half length mismatch in " + dir.string());
    data.features = detail::read_raw<float>(
        dir / std::string(j.at("features_file")),
        data.n * std::size_t(data.rows) * data.cols);
    data.labels = detail::read_raw<double>(
        dir / std::string(j.at("labels_file")), data.n * data.n_out);
    return data;
  } catch (const detail::json::exception& e) {
    throw FormatError("bad dataset manifest in " + dir.string() + ": " +
                      e.what());
  }
}

// --- Regressor bank ------------------------------------------------------

const BankEntry& RegressorBank::model(ZoneGrid::Index zone, int group) const {
  const auto it = models.find({zone, group});
  if (it == models.end()) {
    throw CoverageError("no model for zone (" + std::to_string(zone.i) + ", " +
                        std::to_string(zone.j) + ") group " +
                        std::to_string(group));
  }
  return it->second;
}

bool RegressorBank::has(ZoneGrid::Index zone, int group) const {
  return models.count({zone, group}) > 0;
}

void train_zone_group(RegressorBank& bank, const Volume& vol,
                      const SynthConfig& scfg, ZoneGrid::Index zone, int g,
                      const BankTrainConfig& cfg) {
  bank.grid = scfg.grid;
  bank.roi = scfg.roi;
  bank.render = scfg.render;
  const GroupSpec group = group_spec(g);
  const std::uint64_t key =
      static_cast<std::uint64_t>(zone.i) * 10000 +
      static_cast<std::uint64_t>(zone.j) * 100 + static_cast<std::uint64_t>(g);
  Rng derive = Rng::stream(cfg.seed, key);
  const std::uint64_t seed_data = derive.next_u64();
  const std::uint64_t seed_init = derive.next_u64();
  const std::uint64_t seed_train = derive.next_u64();

  const Dataset data = synthesize_dataset(vol, scfg, zone, group,
                                          cfg.n_samples, seed_data,
                                          cfg.threads);
  NetConfig arch = cfg.arch;
  arch.in_rows = scfg.roi.patch_rows;
  arch.in_cols = scfg.roi.patch_cols;
  arch.n_out = static_cast<int>(group.members.size());
  Network net = make_network(arch);
  xavier_init(net, seed_init);
  TrainConfig tc = cfg.train;
  tc.seed = seed_train;
  tc.threads = cfg.threads;
  train(net, data, tc);

  ModelMeta meta;
  meta.group = g;
  meta.zone_i = zone.i;
  meta.zone_j = zone.j;
  meta.label_half = group.label_half;
  meta.seed = seed_data;
  meta.train = tc;
  bank.models[{zone, g}] = BankEntry{std::move(net), std::move(meta)};
}

void train_zone(RegressorBank& bank, const Volume& vol, const SynthConfig& scfg,
                ZoneGrid::Index zone, const BankTrainConfig& cfg) {
  for (int g = 1; g <= 3; ++g) train_zone_group(bank, vol, scfg, zone, g, cfg);
}

void save_bank(const RegressorBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::json j;
  j["format"] = "rayreg-bank";
  j["version"] = 1;
  j["grid"] = {{"n_alpha", bank.grid.n_alpha},
               {"n_beta", bank.grid.n_beta},
               {"span_alpha_deg", bank.grid.span_alpha_deg},
               {"span_beta_deg", bank.grid.span_beta_deg},
               {"origin_alpha_deg", bank.grid.origin_alpha_deg},
               {"origin_beta_deg", bank.grid.origin_beta_deg}};
  j["roi"] = {{"w0_mm", bank.roi.w0_mm},
              {"h0_mm", bank.roi.h0_mm},
              {"patch_rows", bank.roi.patch_rows},
              {"patch_cols", bank.roi.patch_cols}};
  j["render"] = {{"step_mm", bank.render.step_mm}};
  j["models"] = detail::json::array();
  for (const auto& [key, entry] : bank.models) {
    const auto& [zone, group] = key;
    const std::string name = "zone_" + std::to_string(zone.i) + "_" +
                             std::to_string(zone.j) + "_g" +
                             std::to_string(group) + ".model.json";
    save_model(entry.net, entry.meta, dir / name);
    j["models"].push_back(
        {{"zone", {zone.i, zone.j}}, {"group", group}, {"file", name}});
  }
  detail::write_json_file(j, dir / "bank.json");
}

RegressorBank load_bank(const std::filesystem::path& dir) {
  const auto j = detail::read_json_file(dir / "bank.json");
  try {
    detail::require(j.at("format") == "rayreg-bank",
                    "not a regressor bank: " + dir.string());
    RegressorBank bank;
    const auto& g = j.at("grid");
    bank.grid.n_alpha = g.at("n_alpha");
    bank.grid.n_beta = g.at("n_beta");
    bank.grid.span_alpha_deg = g.at("span_alpha_deg");
    bank.grid.span_beta_deg = g.at("span_beta_deg");
    bank.grid.origin_alpha_deg = g.at("origin_alpha_deg");
    bank.grid.origin_beta_deg = g.at("origin_beta_deg");
    bank.grid.validate();
    const auto& r = j.at("roi");
    bank.roi.w0_mm = r.at("w0_mm");
    bank.roi.h0_mm = r.at("h0_mm");
    bank.roi.patch_rows = r.at("patch_rows");
    bank.roi.patch_cols = r.at("patch_cols");
    bank.roi.validate();
    bank.render.step_mm = j.at("render").at("step_mm");
    for (const auto& entry : j.at("models")) {
      ZoneGrid::Index zone{entry.at("zone")[0], entry.at("zone")[1]};
      const int group = entry.at("group");
      auto [net, meta] = load_model(dir / std::string(entry.at("file")));
      if (net.cfg.in_rows != bank.roi.patch_rows ||
          net.cfg.in_cols != bank.roi.patch_cols) {
        throw FormatError("model input size does not match the bank ROI");
      }
      if (meta.group != group || meta.zone_i != zone.i ||
          meta.zone_j != zone.j) {
        throw FormatError("model metadata disagrees with the bank manifest");
      }
      if (group < 1 || group > 3 ||
          meta.label_half.size() !=
              group_spec(group).members.size()) {
        throw FormatError("model output does not match its parameter group");
      }
      bank.models[{zone, group}] = BankEntry{std::move(net), std::move(meta)};
    }
    return bank;
  } catch (const detail::json::exception& e) {
    throw FormatError("bad bank manifest in " + dir.string() + ": " + e.what());
  }
}

// --- Registration --------------------------------------------------------

TransformParams regress_once(const RegressorBank& bank, const Volume& vol,
                             const Image& xray, const ProjectionGeometry& geom,
                             const TransformParams& t_init, int threads,
                             std::vector<GroupStep>* steps) {
  if (!t_init.finite()) throw PoseError("non-finite initial parameters");
  TransformParams t = t_init.normalized();
  const ZoneGrid::Index zone = bank.grid.zone_of(t.t_alpha, t.t_beta);
  RenderOptions render = bank.render;
  render.threads = threads;
  for (int g = 1; g <= 3; ++g) {
    const BankEntry& entry = bank.model(zone, g);
    const Feature feat =
        feature_residual(t, xray, vol, geom, bank.roi, render);
    const std::vector<double> out = forward(entry.net, feat.residual);
    const GroupSpec group = group_spec(g);
    const TransformParams before = t;
    auto a = t.as_array();
    for (std::size_t k = 0; k < group.members.size(); ++k) {
      a[group.members[k]] += out[k] * entry.meta.label_half[k];
    }
    t = TransformParams::from_array(a).normalized();
    if (steps) steps->push_back({g, before, t});
  }
  return t;
}

RegressResult regress_multipass(const RegressorBank& bank, const Volume& vol,
                                const Image& xray,
                                const ProjectionGeometry& geom,
                                const TransformParams& t_init,
                                const RegressOptions& opt) {
  if (opt.passes < 1) throw InvalidParameterError("passes must be >= 1");
  RegressResult result;
  TransformParams t = t_init;
  for (int p = 0; p < opt.passes; ++p) {
    t = regress_once(bank, vol, xray, geom, t, opt.threads, &result.steps);
    result.trajectory.push_back(t);
  }
  result.t_est = t;
  return result;
}

}  // namespace rayreg
