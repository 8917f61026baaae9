// rayreg: phantom generation, DRR rendering, training-set synthesis,
// regressor training, registration (CNN and intensity baselines) and
// batch evaluation. Exit codes: 0 ok, 1 usage/config error, 2 runtime
// failure. Every subcommand echoes its effective configuration next to
// its outputs so runs are reproducible from the artifacts alone.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rayreg/baseline.hpp"
#include "rayreg/common.hpp"
#include "rayreg/drr.hpp"
#include "rayreg/eval.hpp"
#include "rayreg/feature.hpp"
#include "rayreg/geometry.hpp"
#include "rayreg/image.hpp"
#include "rayreg/nn.hpp"
#include "rayreg/regression.hpp"
#include "rayreg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rayreg;

namespace {

std::vector<double> parse_doubles(const std::string& s, std::size_t n,
                                  const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw InvalidParameterError("cannot parse " + what + ": '" + s + "'");
    }
  }
  if (out.size() != n) {
    throw InvalidParameterError(what + " needs " + std::to_string(n) +
                                " comma-separated values, got '" + s + "'");
  }
  return out;
}

TransformParams parse_params(const std::string& s, const std::string& what) {
  const auto v = parse_doubles(s, 6, what);
  return TransformParams::from_array({v[0], v[1], v[2], v[3], v[4], v[5]});
}

std::pair<int, int> parse_grid(const std::string& s, const std::string& what) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    throw InvalidParameterError(what + " must look like RxC, got '" + s + "'");
  }
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw InvalidParameterError("cannot parse " + what + ": '" + s + "'");
  }
}

// --- Shared option groups ------------------------------------------------

struct GeomCli {
  std::string file;
  double sdd = 1000.0;
  std::string det = "1024x1024";
  double pixel_spacing = 0.223;
  std::string principal;

  CLI::Option* opt_sdd = nullptr;
  CLI::Option* opt_det = nullptr;
  CLI::Option* opt_spacing = nullptr;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--geom", file,
                    "Geometry JSON (D_mm, det_px, pixel_spacing_mm, "
                    "principal_point_px)");
    opt_sdd = cmd->add_option("--sdd", sdd, "Source-detector distance D [mm]");
    opt_det = cmd->add_option("--det", det, "Detector size in pixels, WxH");
    opt_spacing = cmd->add_option("--pixel-spacing", pixel_spacing,
                                  "Detector pixel spacing [mm]");
    cmd->add_option("--principal", principal,
                    "Principal point in pixel coordinates, 'x,y' "
                    "(default: detector center)");
  }

  void apply_desk(bool desk) {
    // Reduced-resolution preset for fast runs; explicit flags still win.
    if (!desk) return;
    if (opt_det && opt_det->count() == 0) det = "128x128";
    if (opt_spacing && opt_spacing->count() == 0) pixel_spacing = 1.8;
  }

  ProjectionGeometry resolve() const {
    ProjectionGeometry geom;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw FormatError("cannot open geometry file: " + file);
      json j;
      try {
        in >> j;
        geom.source_detector_mm = j.at("D_mm");
        geom.det_width_px = j.at("det_px")[0];
        geom.det_height_px = j.at("det_px")[1];
        geom.pixel_spacing_mm = j.at("pixel_spacing_mm");
        if (j.contains("principal_point_px")) {
          geom.principal_x_px = j.at("principal_point_px")[0];
          geom.principal_y_px = j.at("principal_point_px")[1];
        }
      } catch (const json::exception& e) {
        throw FormatError("bad geometry file " + file + ": " + e.what());
      }
    } else {
      geom.source_detector_mm = sdd;
      const auto [w, h] = parse_grid(det, "--det");
      geom.det_width_px = w;
      geom.det_height_px = h;
      geom.pixel_spacing_mm = pixel_spacing;
      if (!principal.empty()) {
        const auto p = parse_doubles(principal, 2, "--principal");
        geom.principal_x_px = p[0];
        geom.principal_y_px = p[1];
      }
    }
    geom.validate();
    return geom;
  }
};

json geom_json(const ProjectionGeometry& g) {
  return {{"D_mm", g.source_detector_mm},
          {"det_px", {g.det_width_px, g.det_height_px}},
          {"pixel_spacing_mm", g.pixel_spacing_mm},
          {"principal_point_px", {g.principal_x(), g.principal_y()}}};
}

json params_json(const TransformParams& t) {
  const auto a = t.as_array();
  return std::vector<double>(a.begin(), a.end());
}

// "out/foo.vol.json" -> "out/foo.config.json"; directories get
// "effective_config.json" inside.
fs::path config_path(const fs::path& out) {
  if (fs::is_directory(out) || out.extension().empty()) {
    return out / "effective_config.json";
  }
  fs::path p = out;
  while (!p.extension().empty()) p.replace_extension();
  p += ".config.json";
  return p;
}

void write_config(const fs::path& out, const json& j) {
  const fs::path cp = config_path(out);
  if (cp.has_parent_path()) fs::create_directories(cp.parent_path());
  std::ofstream f(cp);
  if (!f) throw FormatError("cannot write " + cp.string());
  f << j.dump(2) << "\n";
}

Image patch_to_image(const Patch& p) {
  Image img(p.cols, p.rows, 1.0, ImageProvenance::Feature);
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      img.at(c, r) = static_cast<float>(p.at(r, c));
    }
  }
  return img;
}

// --- Subcommand state ----------------------------------------------------

struct SynthCli {
  std::string volume, out;
  std::string zone = "0,0";
  std::string group = "all";
  std::size_t n_samples = 2000;
  std::uint64_t seed = 0;
  int threads = 1;
  bool desk = false;
  std::string zone_grid = "18x18";
  std::string zone_span = "20,20";
  std::string zone_origin = "-180,-180";
  double roi_factor = 1.2;
  std::string patch = "156x300";
  double x_half = 10.0, y_half = 10.0, theta_half = 30.0;
  std::string z_range = "400,600";
  double step = 0.0;
  GeomCli geom;

  CLI::Option *opt_grid = nullptr, *opt_span = nullptr, *opt_origin = nullptr,
              *opt_patch = nullptr, *opt_zrange = nullptr;

  void add_common(CLI::App* cmd) {
    cmd->add_option("--volume", volume, "Attenuation volume (.vol.json)")
        ->required();
    cmd->add_option("--zone", zone, "Target zone index 'i,j'");
    opt_grid = cmd->add_option("--zone-grid", zone_grid,
                               "Zone grid dimensions RxC over (alpha, beta)");
    opt_span = cmd->add_option("--zone-span", zone_span,
                               "Zone extent 'A,B' in degrees");
    opt_origin = cmd->add_option("--zone-origin", zone_origin,
                                 "Grid origin 'A,B' in degrees");
    cmd->add_option("--n-samples", n_samples, "Training samples per group");
    cmd->add_option("--seed", seed, "Base random seed");
    cmd->add_option("--threads", threads, "Worker threads (outputs identical)");
    cmd->add_flag("--desk", desk,
                  "Desk-scale preset: 1x1 zone grid (+-10 deg), small patch, "
                  "128x128 detector, tight z range");
    cmd->add_option("--roi-factor", roi_factor,
                    "ROI size as a multiple of the object bbox diagonal");
    opt_patch = cmd->add_option("--patch", patch, "Patch resolution RxC");
    cmd->add_option("--x-half", x_half, "Nominal |t_x| range [mm]");
    cmd->add_option("--y-half", y_half, "Nominal |t_y| range [mm]");
    opt_zrange = cmd->add_option("--z-range", z_range, "Nominal t_z range 'lo,hi' [mm]");
    cmd->add_option("--theta-half", theta_half, "Nominal |t_theta| range [deg]");
    cmd->add_option("--step", step, "DRR integration step [mm]; 0 = auto");
    geom.add_to(cmd);
  }

  void apply_desk() {
    if (!desk) return;
    geom.apply_desk(true);
    if (opt_grid->count() == 0) zone_grid = "1x1";
    if (opt_span->count() == 0) zone_span = "20,20";
    if (opt_origin->count() == 0) zone_origin = "-10,-10";
    if (opt_patch->count() == 0) patch = "48x88";
    if (opt_zrange->count() == 0) z_range = "450,550";
  }

  SynthConfig resolve(const Volume& vol) const {
    SynthConfig cfg;
    const auto [gr, gc] = parse_grid(zone_grid, "--zone-grid");
    cfg.grid.n_alpha = gr;
    cfg.grid.n_beta = gc;
    const auto span = parse_doubles(zone_span, 2, "--zone-span");
    cfg.grid.span_alpha_deg = span[0];
    cfg.grid.span_beta_deg = span[1];
    const auto org = parse_doubles(zone_origin, 2, "--zone-origin");
    cfg.grid.origin_alpha_deg = org[0];
    cfg.grid.origin_beta_deg = org[1];
    cfg.grid.validate();
    const auto [pr, pc] = parse_grid(patch, "--patch");
    cfg.roi = default_roi_spec(vol, roi_factor, pr, pc);
    cfg.nominal.x_half_mm = x_half;
    cfg.nominal.y_half_mm = y_half;
    const auto zr = parse_doubles(z_range, 2, "--z-range");
    cfg.nominal.z_min_mm = zr[0];
    cfg.nominal.z_max_mm = zr[1];
    cfg.nominal.theta_half_deg = theta_half;
    cfg.render.step_mm = step;
    cfg.geom = geom.resolve();
    return cfg;
  }

  ZoneGrid::Index zone_index() const {
    const auto v = parse_doubles(zone, 2, "--zone");
    return {static_cast<int>(v[0]), static_cast<int>(v[1])};
  }

  std::vector<int> groups() const {
    if (group == "all") return {1, 2, 3};
    if (group == "1" || group == "2" || group == "3") return {group[0] - '0'};
    throw InvalidParameterError("--group must be 1, 2, 3 or all");
  }

  json config_json(const SynthConfig& cfg) const {
    json j;
    j["volume"] = volume;
    j["zone"] = {zone_index().i, zone_index().j};
    j["group"] = group;
    j["n_samples"] = n_samples;
    j["seed"] = seed;
    j["grid"] = {{"n_alpha", cfg.grid.n_alpha},
                 {"n_beta", cfg.grid.n_beta},
                 {"span_deg", {cfg.grid.span_alpha_deg, cfg.grid.span_beta_deg}},
                 {"origin_deg",
                  {cfg.grid.origin_alpha_deg, cfg.grid.origin_beta_deg}}};
    j["roi"] = {{"w0_mm", cfg.roi.w0_mm},
                {"h0_mm", cfg.roi.h0_mm},
                {"patch", {cfg.roi.patch_rows, cfg.roi.patch_cols}}};
    j["nominal"] = {{"x_half_mm", cfg.nominal.x_half_mm},
                    {"y_half_mm", cfg.nominal.y_half_mm},
                    {"z_range_mm", {cfg.nominal.z_min_mm, cfg.nominal.z_max_mm}},
                    {"theta_half_deg", cfg.nominal.theta_half_deg}};
    j["step_mm"] = cfg.render.step_mm;
    j["geom"] = geom_json(cfg.geom);
    return j;
  }
};

int run_phantom(const std::string& preset, double spacing, double side,
                double radius, double mu, const std::string& out) {
  PhantomSpec spec;
  if (preset == "plate") {
    spec = plate_phantom_spec(spacing);
  } else if (preset == "cube") {
    spec = cube_phantom_spec(side, mu, spacing);
  } else if (preset == "sphere") {
    spec = sphere_phantom_spec(radius, mu, spacing);
  } else {
    throw InvalidParameterError("unknown phantom preset: " + preset);
  }
  const Volume vol = make_phantom(spec);
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_volume(vol, out_path);
  const BoundingBox bbox = object_bbox(vol);
  write_config(out_path,
               {{"command", "phantom"},
                {"preset", preset},
                {"spacing_mm", spacing},
                {"side_mm", side},
                {"radius_mm", radius},
                {"mu", mu},
                {"out", out},
                {"dims", {vol.nx, vol.ny, vol.nz}},
                {"bbox_diagonal_mm", bbox.diagonal()}});
  std::cout << "wrote " << out << " (" << vol.nx << "x" << vol.ny << "x"
            << vol.nz << ", bbox diagonal " << bbox.diagonal() << " mm)\n";
  return 0;
}

int run_drr(const std::string& volume, const std::string& params_str,
            const GeomCli& geom_cli, double step, int threads,
            const std::string& out, const std::string& pgm) {
  const Volume vol = load_volume(volume);
  const TransformParams t = parse_params(params_str, "--params");
  const ProjectionGeometry geom = geom_cli.resolve();
  RenderOptions opts;
  opts.step_mm = step;
  opts.threads = threads;
  const Image img = render_drr(vol, t, geom, opts);
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_image(img, out_path);
  if (!pgm.empty()) write_pgm(img, pgm);
  write_config(out_path, {{"command", "drr"},
                          {"volume", volume},
                          {"params", params_json(t)},
                          {"geom", geom_json(geom)},
                          {"step_mm", step},
                          {"out", out}});
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_synth(SynthCli& cli) {
  cli.apply_desk();
  const Volume vol = load_volume(cli.volume);
  const SynthConfig cfg = cli.resolve(vol);
  const ZoneGrid::Index zone = cli.zone_index();
  fs::create_directories(cli.out);
  for (int g : cli.groups()) {
    const GroupSpec group = group_spec(g);
    Rng derive = Rng::stream(cli.seed, static_cast<std::uint64_t>(zone.i) * 10000 +
                                           static_cast<std::uint64_t>(zone.j) * 100 +
                                           static_cast<std::uint64_t>(g));
    const std::uint64_t seed_data = derive.next_u64();
    const Dataset data = synthesize_dataset(vol, cfg, zone, group,
                                            cli.n_samples, seed_data,
                                            cli.threads);
    write_dataset(data, cfg, zone, g, seed_data,
                  fs::path(cli.out) / ("group" + std::to_string(g)));
    std::cout << "group " << g << ": " << data.n << " samples ("
              << data.rows << "x" << data.cols << ")\n";
  }
  json j = cli.config_json(cfg);
  j["command"] = "synth";
  j["out"] = cli.out;
  write_config(fs::path(cli.out), j);
  return 0;
}

struct TrainCli {
  SynthCli synth;
  int epochs = 32;
  int batch = 64;
  int c1 = 6, c2 = 16, fc_units = 250, kernel = 5;
  CLI::Option *opt_c1 = nullptr, *opt_c2 = nullptr;

  void apply_desk() {
    synth.apply_desk();
    if (!synth.desk) return;
    if (opt_c1->count() == 0) c1 = 6;
    if (opt_c2->count() == 0) c2 = 16;
  }
};

int run_train(TrainCli& cli) {
  cli.apply_desk();
  const Volume vol = load_volume(cli.synth.volume);
  const SynthConfig cfg = cli.synth.resolve(vol);
  const ZoneGrid::Index zone = cli.synth.zone_index();

  BankTrainConfig bcfg;
  bcfg.arch.kernel = cli.kernel;
  bcfg.arch.c1 = cli.c1;
  bcfg.arch.c2 = cli.c2;
  bcfg.arch.fc_units = cli.fc_units;
  bcfg.train.batch_size = cli.batch;
  bcfg.train.epochs = cli.epochs;
  bcfg.n_samples = cli.synth.n_samples;
  bcfg.seed = cli.synth.seed;
  bcfg.threads = cli.synth.threads;

  RegressorBank bank;
  const fs::path out(cli.synth.out);
  if (fs::exists(out / "bank.json")) {
    bank = load_bank(out);  // extend an existing bank
  }
  for (int g : cli.synth.groups()) {
    std::cout << "training zone (" << zone.i << ", " << zone.j << ") group "
              << g << "...\n";
    train_zone_group(bank, vol, cfg, zone, g, bcfg);
  }
  save_bank(bank, out);

  json j = cli.synth.config_json(cfg);
  j["command"] = "train";
  j["out"] = cli.synth.out;
  j["epochs"] = cli.epochs;
  j["batch_size"] = cli.batch;
  j["arch"] = {{"kernel", cli.kernel},
               {"c1", cli.c1},
               {"c2", cli.c2},
               {"fc_units", cli.fc_units}};
  write_config(out, j);
  std::cout << "bank written to " << cli.synth.out << "\n";
  return 0;
}

int run_register(const std::string& volume, const std::string& xray_path,
                 const std::string& bank_dir, const std::string& init_str,
                 int passes, int threads, const GeomCli& geom_cli,
                 const std::string& out) {
  const Volume vol = load_volume(volume);
  const Image xray = load_image(xray_path);
  const RegressorBank bank = load_bank(bank_dir);
  const TransformParams t_init = parse_params(init_str, "--init");
  const ProjectionGeometry geom = geom_cli.resolve();

  RegressOptions opt;
  opt.passes = passes;
  opt.threads = threads;
  const RegressResult res =
      regress_multipass(bank, vol, xray, geom, t_init, opt);

  json j;
  j["command"] = "register";
  j["volume"] = volume;
  j["xray"] = xray_path;
  j["bank"] = bank_dir;
  j["geom"] = geom_json(geom);
  j["passes"] = passes;
  j["t_init"] = params_json(t_init);
  j["t_est"] = params_json(res.t_est);
  j["trajectory"] = json::array();
  for (const auto& t : res.trajectory) j["trajectory"].push_back(params_json(t));
  j["steps"] = json::array();
  for (const auto& s : res.steps) {
    j["steps"].push_back({{"group", s.group},
                          {"before", params_json(s.before)},
                          {"after", params_json(s.after)}});
  }
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream f(out_path);
  if (!f) throw FormatError("cannot write " + out);
  f << j.dump(2) << "\n";
  write_config(out_path, j);
  std::cout << "estimate:";
  for (double v : res.t_est.as_array()) std::cout << " " << v;
  std::cout << "\n";
  return 0;
}

int run_baseline(const std::string& volume, const std::string& xray_path,
                 const std::string& init_str, const std::string& method_str,
                 const GeomCli& geom_cli, double roi_factor,
                 const std::string& patch, double step, int threads,
                 double ftol, int max_iter, const std::string& out) {
  const Volume vol = load_volume(volume);
  const Image xray = load_image(xray_path);
  const TransformParams t_init = parse_params(init_str, "--init");
  const ProjectionGeometry geom = geom_cli.resolve();
  const BaselineMethod method = baseline_method_from_string(method_str);

  BaselineConfig cfg;
  const auto [pr, pc] = parse_grid(patch, "--patch");
  cfg.roi = default_roi_spec(vol, roi_factor, pr, pc);
  cfg.render.step_mm = step;
  cfg.render.threads = threads;
  cfg.powell.ftol = ftol;
  cfg.powell.max_iter = max_iter;
  const BaselineOutcome res =
      register_baseline(method, vol, xray, geom, t_init, cfg);

  json j;
  j["command"] = "baseline";
  j["volume"] = volume;
  j["xray"] = xray_path;
  j["method"] = to_string(method);
  j["geom"] = geom_json(geom);
  j["roi_factor"] = roi_factor;
  j["patch"] = {pr, pc};
  j["step_mm"] = step;
  j["powell"] = {{"ftol", ftol}, {"max_iter", max_iter}};
  j["t_init"] = params_json(t_init);
  j["t_est"] = params_json(res.t_est);
  j["similarity"] = res.similarity;
  j["n_evals"] = res.n_evals;
  j["n_iter"] = res.n_iter;
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream f(out_path);
  if (!f) throw FormatError("cannot write " + out);
  f << j.dump(2) << "\n";
  write_config(out_path, j);
  std::cout << to_string(method) << " estimate:";
  for (double v : res.t_est.as_array()) std::cout << " " << v;
  std::cout << " (similarity " << res.similarity << ", " << res.n_evals
            << " evals)\n";
  return 0;
}

int run_evaluate(const std::string& volume, const std::string& gt_str,
                 const std::string& methods_str, const std::string& bank_dir,
                 int n_perturb, std::uint64_t seed, const std::string& stds_str,
                 double noise_pct, int passes, const GeomCli& geom_cli,
                 double roi_factor, const std::string& patch, double step,
                 int threads, const std::string& out) {
  const Volume vol = load_volume(volume);
  const TransformParams t_gt = parse_params(gt_str, "--gt");
  const ProjectionGeometry geom = geom_cli.resolve();

  PerturbSpec perturb;
  perturb.count = n_perturb;
  perturb.seed = seed;
  const auto stds = parse_doubles(stds_str, 6, "--perturb-stds");
  for (int i = 0; i < 6; ++i) perturb.stds[i] = stds[i];

  RenderOptions render;
  render.step_mm = step;
  render.threads = threads;

  std::optional<RegressorBank> bank;
  const auto [pr, pc] = parse_grid(patch, "--patch");
  BaselineConfig bcfg;
  bcfg.roi = default_roi_spec(vol, roi_factor, pr, pc);
  bcfg.render = render;

  std::vector<MethodSpec> methods;
  std::stringstream ss(methods_str);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "cnn") {
      if (bank_dir.empty()) {
        throw InvalidParameterError("--bank is required for the cnn method");
      }
      if (!bank) bank = load_bank(bank_dir);
      const RegressorBank* b = &*bank;
      methods.push_back(MethodSpec{
          "cnn", [b, &vol, &geom, passes, threads](const Image& xray,
                                                   const TransformParams& t0) {
            RegressOptions opt;
            opt.passes = passes;
            opt.threads = threads;
            const RegressResult r =
                regress_multipass(*b, vol, xray, geom, t0, opt);
            return RegRun{r.t_est, 3L * passes};
          }});
    } else {
      const BaselineMethod m = baseline_method_from_string(name);
      methods.push_back(MethodSpec{
          to_string(m), [m, &vol, &geom, bcfg](const Image& xray,
                                               const TransformParams& t0) {
            const BaselineOutcome r =
                register_baseline(m, vol, xray, geom, t0, bcfg);
            return RegRun{r.t_est, r.n_evals};
          }});
    }
  }

  std::vector<EvalCase> cases(1);
  cases[0].id = "case0";
  cases[0].t_gt = t_gt;
  cases[0].noise_sigma_pct = noise_pct;
  cases[0].noise_seed = seed + 1;

  const ExperimentReport report =
      run_experiment(methods, vol, geom, cases, perturb, render, fs::path(out));

  json j;
  j["command"] = "evaluate";
  j["volume"] = volume;
  j["gt"] = params_json(t_gt);
  j["methods"] = methods_str;
  j["bank"] = bank_dir;
  j["n_perturb"] = n_perturb;
  j["seed"] = seed;
  j["perturb_stds"] = stds;
  j["noise_sigma_pct"] = noise_pct;
  j["passes"] = passes;
  j["geom"] = geom_json(geom);
  j["roi_factor"] = roi_factor;
  j["patch"] = {pr, pc};
  j["step_mm"] = step;
  j["threshold_mm"] = report.threshold_mm;
  write_config(fs::path(out), j);

  for (const MethodSummary& s : report.summaries) {
    std::cout << s.method << ": success " << 100.0 * s.success_rate << "% ("
              << s.n_success << "/" << s.n_trials << "), mTREproj "
              << s.mean_mtreproj_mm << " mm, time " << s.time_mean_s << " +- "
              << s.time_std_s << " s\n";
  }
  return 0;
}

int run_inspect(const std::string& volume, const std::string& image,
                const std::string& model, const std::string& dataset,
                const std::string& bank_dir, const std::string& xray_path,
                const std::string& params_str, const GeomCli& geom_cli,
                double roi_factor, const std::string& patch,
                const std::string& out, int dump_samples) {
  json j;
  const bool dump = !out.empty();
  if (dump) fs::create_directories(out);

  if (!volume.empty() && xray_path.empty()) {
    const Volume vol = load_volume(volume);
    const BoundingBox bbox = object_bbox(vol);
    j["volume"] = {{"path", volume},
                   {"dims", {vol.nx, vol.ny, vol.nz}},
                   {"spacing_mm",
                    {vol.spacing.x(), vol.spacing.y(), vol.spacing.z()}},
                   {"gravity_center_mm",
                    {vol.gravity_center.x(), vol.gravity_center.y(),
                     vol.gravity_center.z()}},
                   {"bbox_diagonal_mm", bbox.diagonal()}};
    if (dump) {
      // Central z slice for a quick look.
      Image slice(vol.nx, vol.ny, vol.spacing.x(), ImageProvenance::Feature);
      const int zc = vol.nz / 2;
      for (int y = 0; y < vol.ny; ++y) {
        for (int x = 0; x < vol.nx; ++x) {
          slice.at(x, y) = vol.at(x, y, zc);
        }
      }
      write_pgm(slice, fs::path(out) / "volume_slice.pgm");
    }
  }
  if (!image.empty()) {
    const Image img = load_image(image);
    const auto [lo, hi] =
        std::minmax_element(img.values.begin(), img.values.end());
    j["image"] = {{"path", image},
                  {"size", {img.width, img.height}},
                  {"pixel_spacing_mm", img.pixel_spacing_mm},
                  {"provenance", to_string(img.provenance)},
                  {"min", *lo},
                  {"max", *hi}};
    if (dump) write_pgm(img, fs::path(out) / "image.pgm");
  }
  if (!volume.empty() && !xray_path.empty()) {
    // Feature dump: DRR patch, X-ray patch and their residual at --params.
    const Volume vol = load_volume(volume);
    const Image xray = load_image(xray_path);
    const ProjectionGeometry geom = geom_cli.resolve();
    const TransformParams t = parse_params(params_str, "--params");
    const auto [pr, pc] = parse_grid(patch, "--patch");
    const RoiSpec roi_spec = default_roi_spec(vol, roi_factor, pr, pc);
    const Feature feat = feature_residual(t, xray, vol, geom, roi_spec);
    j["feature"] = {{"params", params_json(t)},
                    {"roi",
                     {{"center_mm", {feat.roi.center_mm.x(), feat.roi.center_mm.y()}},
                      {"width_mm", feat.roi.width_mm},
                      {"height_mm", feat.roi.height_mm},
                      {"phi_deg", feat.roi.phi_deg}}},
                    {"out_of_field", feat.out_of_field}};
    if (dump) {
      write_pgm(patch_to_image(feat.residual), fs::path(out) / "residual.pgm");
      const Roi roi = compute_roi(t, geom, roi_spec);
      const Image drr = render_drr(vol, t, geom, {});
      write_pgm(patch_to_image(extract_patch(drr, roi, roi_spec, geom)),
                fs::path(out) / "patch_drr.pgm");
      write_pgm(patch_to_image(extract_patch(xray, roi, roi_spec, geom)),
                fs::path(out) / "patch_xray.pgm");
    }
  }
  if (!model.empty()) {
    const auto [net, meta] = load_model(model);
    j["model"] = {{"path", model},
                  {"arch",
                   {{"in", {net.cfg.in_rows, net.cfg.in_cols}},
                    {"kernel", net.cfg.kernel},
                    {"c1", net.cfg.c1},
                    {"c2", net.cfg.c2},
                    {"fc_units", net.cfg.fc_units},
                    {"n_out", net.cfg.n_out}}},
                  {"n_params", net.n_params()},
                  {"group", meta.group},
                  {"zone", {meta.zone_i, meta.zone_j}},
                  {"label_half", meta.label_half}};
  }
  if (!dataset.empty()) {
    const Dataset data = load_dataset(dataset);
    j["dataset"] = {{"path", dataset},
                    {"n", data.n},
                    {"patch", {data.rows, data.cols}},
                    {"n_out", data.n_out},
                    {"label_half", data.label_half}};
    if (dump) {
      const int k = std::min<int>(dump_samples, static_cast<int>(data.n));
      for (int i = 0; i < k; ++i) {
        Patch p(data.rows, data.cols);
        const auto f = data.feature(i);
        for (std::size_t v = 0; v < f.size(); ++v) p.values[v] = f[v];
        write_pgm(patch_to_image(p),
                  fs::path(out) / ("sample" + std::to_string(i) + ".pgm"));
      }
    }
  }
  if (!bank_dir.empty()) {
    const RegressorBank b = load_bank(bank_dir);
    j["bank"] = {{"path", bank_dir},
                 {"grid", {b.grid.n_alpha, b.grid.n_beta}},
                 {"span_deg", {b.grid.span_alpha_deg, b.grid.span_beta_deg}},
                 {"patch", {b.roi.patch_rows, b.roi.patch_cols}},
                 {"n_models", b.models.size()}};
    j["bank"]["models"] = json::array();
    for (const auto& [key, entry] : b.models) {
      j["bank"]["models"].push_back({{"zone", {key.first.i, key.first.j}},
                                     {"group", key.second},
                                     {"n_params", entry.net.n_params()}});
    }
  }
  if (j.empty()) {
    throw InvalidParameterError(
        "nothing to inspect; pass --volume, --image, --model, --dataset or "
        "--bank");
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2-D/3-D rigid registration: DRR rendering, CNN pose "
               "regression and intensity-based baselines"};
  app.require_subcommand(1);

  // phantom
  auto* cmd_phantom = app.add_subcommand("phantom", "Generate a test volume");
  std::string ph_preset, ph_out;
  double ph_spacing = 0.5, ph_side = 20.0, ph_radius = 10.0, ph_mu = 0.02;
  cmd_phantom->add_option("--preset", ph_preset, "plate | cube | sphere")
      ->required();
  cmd_phantom->add_option("--spacing", ph_spacing, "Voxel spacing [mm]");
  cmd_phantom->add_option("--side", ph_side, "Cube side [mm]");
  cmd_phantom->add_option("--radius", ph_radius, "Sphere radius [mm]");
  cmd_phantom->add_option("--mu", ph_mu, "Attenuation [1/mm]");
  cmd_phantom->add_option("--out", ph_out, "Output volume (.vol.json)")
      ->required();

  // drr
  auto* cmd_drr = app.add_subcommand("drr", "Render a DRR");
  std::string drr_volume, drr_params = "0,0,500,0,0,0", drr_out, drr_pgm;
  double drr_step = 0.0;
  int drr_threads = 1;
  GeomCli drr_geom;
  cmd_drr->add_option("--volume", drr_volume, "Volume (.vol.json)")->required();
  cmd_drr->add_option("--params", drr_params,
                      "t_x,t_y,t_z,t_theta,t_alpha,t_beta [mm, deg]");
  cmd_drr->add_option("--step", drr_step, "Integration step [mm]; 0 = auto");
  cmd_drr->add_option("--threads", drr_threads, "Worker threads");
  cmd_drr->add_option("--out", drr_out, "Output image (.img.json)")->required();
  cmd_drr->add_option("--pgm", drr_pgm, "Also write an 8-bit PGM preview");
  drr_geom.add_to(cmd_drr);

  // synth
  auto* cmd_synth = app.add_subcommand("synth", "Synthesize a training set");
  SynthCli synth_cli;
  synth_cli.add_common(cmd_synth);
  cmd_synth->add_option("--group", synth_cli.group, "1 | 2 | 3 | all");
  cmd_synth->add_option("--out", synth_cli.out, "Output dataset directory")
      ->required();

  // train
  auto* cmd_train = app.add_subcommand("train", "Train zone regressors");
  TrainCli train_cli;
  train_cli.synth.add_common(cmd_train);
  cmd_train->add_option("--group", train_cli.synth.group, "1 | 2 | 3 | all");
  cmd_train->add_option("--out", train_cli.synth.out, "Output bank directory")
      ->required();
  cmd_train->add_option("--epochs", train_cli.epochs, "Training epochs");
  cmd_train->add_option("--batch", train_cli.batch, "Mini-batch size");
  train_cli.opt_c1 = cmd_train->add_option("--c1", train_cli.c1,
                                           "Channels of the first conv layer");
  train_cli.opt_c2 = cmd_train->add_option("--c2", train_cli.c2,
                                           "Channels of the second conv layer");
  cmd_train->add_option("--fc", train_cli.fc_units, "Hidden FC units");
  cmd_train->add_option("--kernel", train_cli.kernel, "Conv kernel size");

  // register
  auto* cmd_register =
      app.add_subcommand("register", "CNN hierarchical registration");
  std::string reg_volume, reg_xray, reg_bank, reg_init, reg_out;
  int reg_passes = 1, reg_threads = 1;
  GeomCli reg_geom;
  cmd_register->add_option("--volume", reg_volume, "Volume (.vol.json)")
      ->required();
  cmd_register->add_option("--xray", reg_xray, "Fixed image (.img.json)")
      ->required();
  cmd_register->add_option("--bank", reg_bank, "Regressor bank directory")
      ->required();
  cmd_register->add_option("--init", reg_init, "Initial parameters")->required();
  cmd_register->add_option("--passes", reg_passes, "Hierarchy passes");
  cmd_register->add_option("--threads", reg_threads, "Worker threads");
  cmd_register->add_option("--out", reg_out, "Result JSON")->required();
  reg_geom.add_to(cmd_register);

  // baseline
  auto* cmd_baseline =
      app.add_subcommand("baseline", "Intensity-based registration");
  std::string bl_volume, bl_xray, bl_init, bl_method = "gc", bl_out;
  std::string bl_patch = "156x300";
  double bl_roi_factor = 1.2, bl_step = 0.0, bl_ftol = 1e-6;
  int bl_threads = 1, bl_max_iter = 30;
  GeomCli bl_geom;
  cmd_baseline->add_option("--volume", bl_volume, "Volume (.vol.json)")
      ->required();
  cmd_baseline->add_option("--xray", bl_xray, "Fixed image (.img.json)")
      ->required();
  cmd_baseline->add_option("--init", bl_init, "Initial parameters")->required();
  cmd_baseline->add_option("--method", bl_method, "mi | gc | mi+gc");
  cmd_baseline->add_option("--roi-factor", bl_roi_factor, "ROI size factor");
  cmd_baseline->add_option("--patch", bl_patch, "Patch resolution RxC");
  cmd_baseline->add_option("--step", bl_step, "DRR step [mm]; 0 = auto");
  cmd_baseline->add_option("--threads", bl_threads, "Worker threads");
  cmd_baseline->add_option("--ftol", bl_ftol, "Powell convergence tolerance");
  cmd_baseline->add_option("--max-iter", bl_max_iter, "Powell iteration cap");
  cmd_baseline->add_option("--out", bl_out, "Result JSON")->required();
  bl_geom.add_to(cmd_baseline);

  // evaluate
  auto* cmd_evaluate =
      app.add_subcommand("evaluate", "Perturbation study over methods");
  std::string ev_volume, ev_gt = "0,0,500,0,0,0", ev_methods = "gc";
  std::string ev_bank, ev_stds = "1,1,10,2,10,10", ev_patch = "156x300", ev_out;
  std::uint64_t ev_seed = 0;
  int ev_n = 140, ev_passes = 3, ev_threads = 1;
  double ev_noise = 0.0, ev_roi_factor = 1.2, ev_step = 0.0;
  GeomCli ev_geom;
  cmd_evaluate->add_option("--volume", ev_volume, "Volume (.vol.json)")
      ->required();
  cmd_evaluate->add_option("--gt", ev_gt, "Ground-truth parameters");
  cmd_evaluate->add_option("--methods", ev_methods,
                           "Comma list from cnn, mi, gc, mi+gc");
  cmd_evaluate->add_option("--bank", ev_bank, "Bank directory (for cnn)");
  cmd_evaluate->add_option("--n-perturb", ev_n, "Perturbations per case");
  cmd_evaluate->add_option("--seed", ev_seed, "Perturbation seed");
  cmd_evaluate->add_option("--perturb-stds", ev_stds,
                           "Gaussian stds x,y,z,theta,alpha,beta [mm, deg]");
  cmd_evaluate->add_option("--noise", ev_noise,
                           "Additive noise sigma [% of range]");
  cmd_evaluate->add_option("--passes", ev_passes, "CNN hierarchy passes");
  cmd_evaluate->add_option("--roi-factor", ev_roi_factor, "Baseline ROI factor");
  cmd_evaluate->add_option("--patch", ev_patch, "Baseline patch RxC");
  cmd_evaluate->add_option("--step", ev_step, "DRR step [mm]; 0 = auto");
  cmd_evaluate->add_option("--threads", ev_threads, "Worker threads");
  cmd_evaluate->add_option("--out", ev_out, "Output report directory")
      ->required();
  ev_geom.add_to(cmd_evaluate);

  // inspect
  auto* cmd_inspect =
      app.add_subcommand("inspect", "Summarize artifacts, dump previews");
  std::string in_volume, in_image, in_model, in_dataset, in_bank, in_xray;
  std::string in_params = "0,0,500,0,0,0", in_patch = "156x300", in_out;
  double in_roi_factor = 1.2;
  int in_dump = 4;
  GeomCli in_geom;
  cmd_inspect->add_option("--volume", in_volume, "Volume (.vol.json)");
  cmd_inspect->add_option("--image", in_image, "Image (.img.json)");
  cmd_inspect->add_option("--model", in_model, "Model (.model.json)");
  cmd_inspect->add_option("--dataset", in_dataset, "Dataset directory");
  cmd_inspect->add_option("--bank", in_bank, "Bank directory");
  cmd_inspect->add_option("--xray", in_xray,
                          "With --volume: dump the feature at --params");
  cmd_inspect->add_option("--params", in_params, "Feature parameters");
  cmd_inspect->add_option("--roi-factor", in_roi_factor, "ROI size factor");
  cmd_inspect->add_option("--patch", in_patch, "Patch resolution RxC");
  cmd_inspect->add_option("--dump-samples", in_dump,
                          "Dataset samples to dump as PGM");
  cmd_inspect->add_option("--out", in_out, "Directory for PGM dumps");
  in_geom.add_to(cmd_inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (cmd_phantom->parsed()) {
      return run_phantom(ph_preset, ph_spacing, ph_side, ph_radius, ph_mu,
                         ph_out);
    }
    if (cmd_drr->parsed()) {
      return run_drr(drr_volume, drr_params, drr_geom, drr_step, drr_threads,
                     drr_out, drr_pgm);
    }
    if (cmd_synth->parsed()) return run_synth(synth_cli);
    if (cmd_train->parsed()) return run_train(train_cli);
    if (cmd_register->parsed()) {
      return run_register(reg_volume, reg_xray, reg_bank, reg_init, reg_passes,
                          reg_threads, reg_geom, reg_out);
    }
    if (cmd_baseline->parsed()) {
      return run_baseline(bl_volume, bl_xray, bl_init, bl_method, bl_geom,
                          bl_roi_factor, bl_patch, bl_step, bl_threads, bl_ftol,
                          bl_max_iter, bl_out);
    }
    if (cmd_evaluate->parsed()) {
      return run_evaluate(ev_volume, ev_gt, ev_methods, ev_bank, ev_n, ev_seed,
                          ev_stds, ev_noise, ev_passes, ev_geom, ev_roi_factor,
                          ev_patch, ev_step, ev_threads, ev_out);
    }
    if (cmd_inspect->parsed()) {
      return run_inspect(in_volume, in_image, in_model, in_dataset, in_bank,
                         in_xray, in_params, in_geom, in_roi_factor, in_patch,
                         in_out, in_dump);
    }
  } catch (const InvalidParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
