#include "rayreg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "io_util.hpp"
#include "rayreg/drr.hpp"

namespace rayreg {

double mtre_proj(const TransformParams& t_est, const TransformParams& t_gt,
                 const std::array<Eigen::Vector3d, 8>& corners,
                 const Eigen::Vector3d& rotation_center,
                 const ProjectionGeometry& geom) {
  geom.validate();
  const RigidPose pose_est = pose_from_params(t_est, rotation_center);
  const RigidPose pose_gt = pose_from_params(t_gt, rotation_center);
  const double d = geom.source_detector_mm;
  double acc = 0.0;
  for (const auto& corner : corners) {
    const Eigen::Vector3d p_est = pose_est.apply(corner);
    const Eigen::Vector3d p_gt = pose_gt.apply(corner);
    const Eigen::Vector2d q_est = project_point(p_est, geom);
    const Eigen::Vector2d q_gt = project_point(p_gt, geom);
    // Detector-plane displacement rescaled to this corner's object plane:
    // for a pure in-plane shift the magnification cancels exactly.
    acc += (q_est - q_gt).norm() * (p_gt.z() / d);
  }
  return acc / 8.0;
}

double mtre_proj(const TransformParams& t_est, const TransformParams& t_gt,
                 const Volume& vol, const ProjectionGeometry& geom) {
  return mtre_proj(t_est, t_gt, object_bbox(vol).corners(), vol.gravity_center,
                   geom);
}

double success_threshold_mm(const Volume& vol) {
  return 0.01 * object_bbox(vol).diagonal();
}

TransformParams perturb(const TransformParams& t_gt, const PerturbSpec& spec,
                        Rng& rng) {
  auto a = t_gt.as_array();
  for (int i = 0; i < 6; ++i) a[i] += rng.normal(0.0, spec.stds[i]);
  return TransformParams::from_array(a);
}

std::uint64_t trial_seed(std::uint64_t base_seed, int k) {
  // Matches Rng::stream's derivation so the recorded seed reconstructs the
  // exact stream of trial k.
  std::uint64_t s = base_seed;
  splitmix64(s);
  s ^= 0x517cc1b727220a95ULL * (static_cast<std::uint64_t>(k) + 1);
  return s;
}

TransformParams perturbation(const TransformParams& t_gt,
                             const PerturbSpec& spec, int k) {
  Rng rng(trial_seed(spec.seed, k));
  return perturb(t_gt, spec, rng);
}

Image add_gaussian_noise(const Image& img, double sigma_pct,
                         std::uint64_t seed) {
  if (!(sigma_pct >= 0.0)) {
    throw InvalidParameterError("noise sigma must be >= 0");
  }
  Image out = img;
  if (sigma_pct == 0.0 || img.values.empty()) return out;
  const auto [lo, hi] =
      std::minmax_element(img.values.begin(), img.values.end());
  const double range = double(*hi) - double(*lo);
  if (range <= 0.0) return out;
  const double sigma = sigma_pct / 100.0 * range;
  Rng rng = Rng::stream(seed, 0);
  for (float& v : out.values) {
    v = static_cast<float>(v + rng.normal(0.0, sigma));
  }
  return out;
}

ExperimentReport run_experiment(
    const std::vector<MethodSpec>& methods, const Volume& vol,
    const ProjectionGeometry& geom, const std::vector<EvalCase>& cases,
    const PerturbSpec& perturb_spec, const RenderOptions& render,
    const std::optional<std::filesystem::path>& out_dir) {
  if (methods.empty()) throw InvalidParameterError("no methods to evaluate");
  if (cases.empty()) throw InvalidParameterError("no evaluation cases");
  if (perturb_spec.count < 1) {
    throw InvalidParameterError("perturbation count must be >= 1");
  }

  ExperimentReport report;
  report.threshold_mm = success_threshold_mm(vol);
  const auto corners = object_bbox(vol).corners();
  const Eigen::Vector3d center = vol.gravity_center;

  for (const EvalCase& c : cases) {
    Image xray = render_drr(vol, c.t_gt, geom, render);
    xray.provenance = ImageProvenance::SyntheticXray;
    if (c.noise_sigma_pct > 0.0) {
      xray = add_gaussian_noise(xray, c.noise_sigma_pct, c.noise_seed);
    }
    for (int k = 0; k < perturb_spec.count; ++k) {
      const TransformParams t_init = perturbation(c.t_gt, perturb_spec, k);
      for (const MethodSpec& method : methods) {
        TrialRecord row;
        row.method = method.name;
        row.case_id = c.id;
        row.trial_id = k;
        row.seed = trial_seed(perturb_spec.seed, k);
        row.t_init = t_init;
        row.t_est = t_init;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const RegRun run = method.run(xray, t_init);
          row.t_est = run.t_est;
          row.n_drr_evals = run.n_drr_evals;
        } catch (const std::exception&) {
          row.failed = true;
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
        if (!row.failed) {
          try {
            row.mtreproj_mm =
                mtre_proj(row.t_est, c.t_gt, corners, center, geom);
            row.success = row.mtreproj_mm < report.threshold_mm;
          } catch (const BehindSourceError&) {
            row.failed = true;
          }
        }
        if (row.failed) {
          row.mtreproj_mm = std::numeric_limits<double>::quiet_NaN();
          row.success = false;
        }
        report.trials.push_back(std::move(row));
      }
    }
  }
  report.summaries = summarize(report.trials, report.threshold_mm);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_report_csv(report, *out_dir / "report.csv");
    write_report_json(report, *out_dir / "report.json");
  }
  return report;
}

std::vector<MethodSummary> summarize(const std::vector<TrialRecord>& trials,
                                     double threshold_mm) {
  std::vector<MethodSummary> out;
  auto find = [&out](const std::string& name) -> MethodSummary& {
    for (auto& s : out) {
      if (s.method == name) return s;
    }
    out.push_back(MethodSummary{});
    out.back().method = name;
    return out.back();
  };
  for (const TrialRecord& row : trials) {
    MethodSummary& s = find(row.method);
    s.n_trials += 1;
    const bool ok =
        !row.failed && std::isfinite(row.mtreproj_mm) &&
        row.mtreproj_mm < threshold_mm;
    if (ok) {
      s.n_success += 1;
      s.mean_mtreproj_mm += row.mtreproj_mm;  // running sum, divided below
    }
    s.time_mean_s += row.wall_time_s;
  }
  for (MethodSummary& s : out) {
    s.success_rate = double(s.n_success) / double(s.n_trials);
    s.mean_mtreproj_mm = s.n_success > 0
                             ? s.mean_mtreproj_mm / double(s.n_success)
                             : std::numeric_limits<double>::quiet_NaN();
    s.time_mean_s /= double(s.n_trials);
  }
  for (MethodSummary& s : out) {
    double acc = 0.0;
    for (const TrialRecord& row : trials) {
      if (row.method == s.method) {
        const double d = row.wall_time_s - s.time_mean_s;
        acc += d * d;
      }
    }
    s.time_std_s = s.n_trials > 1 ? std::sqrt(acc / double(s.n_trials - 1)) : 0.0;
  }
  return out;
}

namespace {

void append_params(std::ostream& os, const TransformParams& t) {
  for (double v : t.as_array()) {
    os << "," << std::setprecision(17) << v;
  }
}

}  // namespace

void write_report_csv(const ExperimentReport& report,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << "method,case_id,trial_id,seed";
  for (const char* p : {"x", "y", "z", "theta", "alpha", "beta"}) {
    out << ",init_" << p;
  }
  for (const char* p : {"x", "y", "z", "theta", "alpha", "beta"}) {
    out << ",est_" << p;
  }
  out << ",mtreproj_mm,success,wall_time_s,n_drr_evals,failed\n";
  for (const TrialRecord& r : report.trials) {
    out << r.method << "," << r.case_id << "," << r.trial_id << "," << r.seed;
    append_params(out, r.t_init);
    append_params(out, r.t_est);
    out << "," << std::setprecision(17) << r.mtreproj_mm << ","
        << (r.success ? 1 : 0) << "," << std::setprecision(17) << r.wall_time_s
        << "," << r.n_drr_evals << "," << (r.failed ? 1 : 0) << "\n";
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

void write_report_json(const ExperimentReport& report,
                       const std::filesystem::path& path) {
  detail::json j;
  j["format"] = "rayreg-report";
  j["version"] = 1;
  j["threshold_mm"] = report.threshold_mm;
  j["summaries"] = detail::json::array();
  for (const MethodSummary& s : report.summaries) {
    detail::json js = {{"method", s.method},
                       {"n_trials", s.n_trials},
                       {"n_success", s.n_success},
                       {"success_rate", s.success_rate},
                       {"time_mean_s", s.time_mean_s},
                       {"time_std_s", s.time_std_s}};
    if (std::isfinite(s.mean_mtreproj_mm)) {
      js["mean_mtreproj_mm"] = s.mean_mtreproj_mm;
    } else {
      js["mean_mtreproj_mm"] = nullptr;
    }
    j["summaries"].push_back(std::move(js));
  }
  j["trials"] = detail::json::array();
  for (const TrialRecord& r : report.trials) {
    const auto ia = r.t_init.as_array();
    const auto ea = r.t_est.as_array();
    j["trials"].push_back(
        {{"method", r.method},
         {"case_id", r.case_id},
         {"trial_id", r.trial_id},
         {"seed", r.seed},
         {"t_init", std::vector<double>(ia.begin(), ia.end())},
         {"t_est", std::vector<double>(ea.begin(), ea.end())},
         {"mtreproj_mm", std::isfinite(r.mtreproj_mm)
                             ? detail::json(r.mtreproj_mm)
                             : detail::json(nullptr)},
         {"success", r.success},
         {"wall_time_s", r.wall_time_s},
         {"n_drr_evals", r.n_drr_evals},
         {"failed", r.failed}});
  }
  detail::write_json_file(j, path);
}

std::vector<TrialRecord> read_trials_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV: " + path.string());
  std::vector<TrialRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 21) {
      throw FormatError("bad CSV row in " + path.string());
    }
    TrialRecord r;
    r.method = fields[0];
    r.case_id = fields[1];
    r.trial_id = std::stoi(fields[2]);
    r.seed = std::stoull(fields[3]);
    std::array<double, 6> ia, ea;
    for (int i = 0; i < 6; ++i) ia[i] = std::stod(fields[4 + i]);
    for (int i = 0; i < 6; ++i) ea[i] = std::stod(fields[10 + i]);
    r.t_init = TransformParams::from_array(ia);
    r.t_est = TransformParams::from_array(ea);
    r.mtreproj_mm = std::stod(fields[16]);
    r.success = fields[17] == "1";
    r.wall_time_s = std::stod(fields[18]);
    r.n_drr_evals = std::stol(fields[19]);
    r.failed = fields[20] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rayreg
