#include "rayreg/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rayreg {

double mutual_information(const Patch& a, const Patch& b, int bins) {
  if (bins < 2) throw InvalidParameterError("MI needs at least 2 bins");
  if (a.rows != b.rows || a.cols != b.cols || a.values.empty()) {
    throw ShapeError("MI: patch size mismatch");
  }
  const std::size_t n = a.values.size();

  auto bin_of = [bins](const std::vector<double>& v) {
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    std::vector<int> idx(v.size(), 0);
    if (range > 0.0) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const int k = static_cast<int>((v[i] - lo) / range * bins);
        idx[i] = std::min(k, bins - 1);
      }
    }
    return idx;
  };
  const std::vector<int> ia = bin_of(a.values);
  const std::vector<int> ib = bin_of(b.values);

  std::vector<double> joint(std::size_t(bins) * bins, 0.0);
  std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    joint[std::size_t(ia[i]) * bins + ib[i]] += w;
    pa[ia[i]] += w;
    pb[ib[i]] += w;
  }
  double mi = 0.0;
  for (int r = 0; r < bins; ++r) {
    for (int c = 0; c < bins; ++c) {
      const double p = joint[std::size_t(r) * bins + c];
      if (p > 0.0) mi += p * std::log(p / (pa[r] * pb[c]));
    }
  }
  return mi;
}

namespace {

// Pearson correlation; either side with zero variance yields 0.
double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double gradient_correlation(const Patch& a, const Patch& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError("GC: patch size mismatch");
  }
  if (a.rows < 3 || a.cols < 3) {
    throw ShapeError("GC needs patches of at least 3x3");
  }
  const int rows = a.rows, cols = a.cols;
  const std::size_t m = std::size_t(rows - 2) * (cols - 2);
  std::vector<double> au(m), av(m), bu(m), bv(m);
  std::size_t i = 0;
  for (int r = 1; r < rows - 1; ++r) {
    for (int c = 1; c < cols - 1; ++c, ++i) {
      au[i] = 0.5 * (a.at(r, c + 1) - a.at(r, c - 1));
      av[i] = 0.5 * (a.at(r + 1, c) - a.at(r - 1, c));
      bu[i] = 0.5 * (b.at(r, c + 1) - b.at(r, c - 1));
      bv[i] = 0.5 * (b.at(r + 1, c) - b.at(r - 1, c));
    }
  }
  return 0.5 * (ncc(au, bu) + ncc(av, bv));
}

// --- Powell --------------------------------------------------------------

namespace {

struct CountedObjective {
  const Objective& f;
  long n_evals = 0;
  std::vector<double>* trace;

  double operator()(const std::vector<double>& x) {
    ++n_evals;
    double v = f(x);
    if (std::isnan(v)) {
      throw DivergedError("objective returned NaN");
    }
    if (trace) trace->push_back(v);
    return v;
  }
};

struct Line {
  CountedObjective& obj;
  const std::vector<double>& p;
  const std::vector<double>& dir;
  std::vector<double> scratch;

  double operator()(double lambda) {
    scratch = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
      scratch[i] += lambda * dir[i];
    }
    return obj(scratch);
  }
};

constexpr double kGold = 1.618034;
constexpr double kGlimit = 100.0;
constexpr double kTiny = 1e-20;

// Outward bracketing of a minimum from (ax, bx), golden-section expansion
// with parabolic probes.
void bracket(Line& f, double& ax, double& bx, double& cx, double& fa,
             double& fb, double& fc) {
  fa = f(ax);
  fb = f(bx);
  if (fb > fa) {
    std::swap(ax, bx);
    std::swap(fa, fb);
  }
  cx = bx + kGold * (bx - ax);
  fc = f(cx);
  while (fb > fc) {
    const double r = (bx - ax) * (fb - fc);
    const double q = (bx - cx) * (fb - fa);
    double denom = 2.0 * std::max(std::abs(q - r), kTiny);
    if (q - r < 0.0) denom = -denom;
    double u = bx - ((bx - cx) * q - (bx - ax) * r) / denom;
    const double ulim = bx + kGlimit * (cx - bx);
    double fu;
    if ((bx - u) * (u - cx) > 0.0) {
      fu = f(u);
      if (fu < fc) {
        ax = bx;
        bx = u;
        fa = fb;
        fb = fu;
        return;
      }
      if (fu > fb) {
        cx = u;
        fc = fu;
        return;
      }
      u = cx + kGold * (cx - bx);
      fu = f(u);
    } else if ((cx - u) * (u - ulim) > 0.0) {
      fu = f(u);
      if (fu < fc) {
        bx = cx;
        cx = u;
        u = u + kGold * (u - cx);
        fb = fc;
        fc = fu;
        fu = f(u);
      }
    } else if ((u - ulim) * (ulim - cx) >= 0.0) {
      u = ulim;
      fu = f(u);
    } else {
      u = cx + kGold * (cx - bx);
      fu = f(u);
    }
    ax = bx;
    bx = cx;
    cx = u;
    fa = fb;
    fb = fc;
    fc = fu;
  }
}

// Brent line minimization on a bracketed triple.
double brent(Line& f, double ax, double bx, double cx, double fbx, double tol,
             double& xmin) {
  constexpr int kItMax = 100;
  constexpr double kCGold = 0.3819660;
  constexpr double kZeps = 1e-10;
  double a = std::min(ax, cx), b = std::max(ax, cx);
  double x = bx, w = bx, v = bx;
  double fx = fbx, fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int it = 0; it < kItMax; ++it) {
    const double xm = 0.5 * (a + b);
    const double tol1 = tol * std::abs(x) + kZeps;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) {
      xmin = x;
      return fx;
    }
    if (std::abs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_tmp = e;
      e = d;
      if (std::abs(p) >= std::abs(0.5 * q * e_tmp) || p <= q * (a - x) ||
          p >= q * (b - x)) {
        e = x >= xm ? a - x : b - x;
        d = kCGold * e;
      } else {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) {
          d = std::copysign(tol1, xm - x);
        }
      }
    } else {
      e = x >= xm ? a - x : b - x;
      d = kCGold * e;
    }
    const double u =
        std::abs(d) >= tol1 ? x + d : x + std::copysign(tol1, d);
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) {
        a = x;
      } else {
        b = x;
      }
      v = w;
      w = x;
      x = u;
      fv = fw;
      fw = fx;
      fx = fu;
    } else {
      if (u < x) {
        a = u;
      } else {
        b = u;
      }
      if (fu <= fw || w == x) {
        v = w;
        w = u;
        fv = fw;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  xmin = x;
  return fx;
}

// Minimizes along dir from p; updates p and returns the new value.
double line_minimize(CountedObjective& obj, std::vector<double>& p,
                     const std::vector<double>& dir, double f_at_p,
                     double line_tol) {
  Line line{obj, p, dir, {}};
  double ax = 0.0, bx = 1.0, cx, fa, fb, fc;
  bracket(line, ax, bx, cx, fa, fb, fc);
  double lambda = 0.0;
  double fmin = brent(line, ax, bx, cx, fb, line_tol, lambda);
  if (fmin > f_at_p) {
    // Numerical edge: keep the incumbent.
    return f_at_p;
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += lambda * dir[i];
  return fmin;
}

}  // namespace

PowellResult powell_minimize(const Objective& f, std::vector<double> x0,
                             const PowellConfig& cfg) {
  const std::size_t n = x0.size();
  if (n == 0) throw InvalidParameterError("empty start point");
  if (!cfg.scales.empty() && cfg.scales.size() != n) {
    throw InvalidParameterError("scale vector length mismatch");
  }
  if (!(cfg.ftol > 0.0) || !(cfg.line_tol > 0.0)) {
    throw InvalidParameterError("tolerances must be positive");
  }

  PowellResult result;
  CountedObjective obj{f, 0, &result.eval_trace};

  // Direction set: scaled coordinate axes.
  std::vector<std::vector<double>> dirs(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    dirs[i][i] = cfg.scales.empty() ? 1.0 : cfg.scales[i];
  }

  std::vector<double> p = std::move(x0);
  double fp = obj(p);
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    result.n_iter = iter + 1;
    const std::vector<double> p0 = p;
    const double f0 = fp;
    double biggest_drop = 0.0;
    std::size_t ibig = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double before = fp;
      fp = line_minimize(obj, p, dirs[i], fp, cfg.line_tol);
      if (before - fp > biggest_drop) {
        biggest_drop = before - fp;
        ibig = i;
      }
      if (obj.n_evals > cfg.max_evals) {
        result.x = p;
        result.f = fp;
        result.n_evals = obj.n_evals;
        return result;
      }
    }
    if (2.0 * (f0 - fp) <= cfg.ftol * (std::abs(f0) + std::abs(fp)) + kTiny) {
      result.converged = true;
      break;
    }
    // Powell's extrapolation test for replacing a direction.
    std::vector<double> extrap(n), new_dir(n);
    for (std::size_t i = 0; i < n; ++i) {
      extrap[i] = 2.0 * p[i] - p0[i];
      new_dir[i] = p[i] - p0[i];
    }
    const double fe = obj(extrap);
    if (fe < f0) {
      const double t = 2.0 * (f0 - 2.0 * fp + fe) *
                           (f0 - fp - biggest_drop) * (f0 - fp - biggest_drop) -
                       biggest_drop * (f0 - fe) * (f0 - fe);
      if (t < 0.0) {
        fp = line_minimize(obj, p, new_dir, fp, cfg.line_tol);
        dirs[ibig] = dirs[n - 1];
        dirs[n - 1] = new_dir;
      }
    }
    if (obj.n_evals > cfg.max_evals) break;
  }
  result.x = p;
  result.f = fp;
  result.n_evals = obj.n_evals;
  return result;
}

// --- Intensity-based registration ----------------------------------------

BaselineMethod baseline_method_from_string(const std::string& s) {
  if (s == "mi") return BaselineMethod::MI;
  if (s == "gc") return BaselineMethod::GC;
  if (s == "mi+gc" || s == "migc") return BaselineMethod::MIGC;
  throw InvalidParameterError("unknown baseline method: " + s);
}

std::string to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::MI: return "mi";
    case BaselineMethod::GC: return "gc";
    case BaselineMethod::MIGC: return "mi+gc";
  }
  throw InvalidParameterError("unknown baseline method value");
}

namespace {

// A pose that cannot be rendered gets a large finite penalty so the line
// search backs away from it.
constexpr double kPenalty = 1e30;

struct SimilarityObjective {
  const Volume& vol;
  const Image& xray;
  const ProjectionGeometry& geom;
  const BaselineConfig& cfg;
  bool use_gc;

  double operator()(const std::vector<double>& x) const {
    TransformParams t = TransformParams::from_array(
        {x[0], x[1], x[2], x[3], x[4], x[5]});
    if (!t.finite()) return kPenalty;
    if (!(t.t_z > 0.0 && t.t_z < geom.source_detector_mm)) return kPenalty;
    try {
      const Roi roi = compute_roi(t, geom, cfg.roi);
      const PixelRect fp = roi_footprint_px(roi, cfg.roi, geom)
                               .clipped(geom.det_width_px, geom.det_height_px);
      if (fp.empty()) return kPenalty;
      const Image drr = render_drr(vol, t, geom, cfg.render, fp);
      const Patch p_drr = extract_patch(drr, roi, cfg.roi, geom);
      const Patch p_xray = extract_patch(xray, roi, cfg.roi, geom);
      const double sim = use_gc
                             ? gradient_correlation(p_drr, p_xray)
                             : mutual_information(p_drr, p_xray, cfg.mi_bins);
      return -sim;  // maximize
    } catch (const PoseError&) {
      return kPenalty;
    }
  }
};

PowellConfig effective_powell(const BaselineConfig& cfg) {
  PowellConfig p = cfg.powell;
  if (p.scales.empty()) p.scales = {1.0, 1.0, 10.0, 2.0, 10.0, 10.0};
  return p;
}

}  // namespace

BaselineOutcome register_baseline(BaselineMethod method, const Volume& vol,
                                  const Image& xray,
                                  const ProjectionGeometry& geom,
                                  const TransformParams& t_init,
                                  const BaselineConfig& cfg) {
  geom.validate();
  cfg.roi.validate();
  if (!t_init.finite()) throw PoseError("non-finite initial parameters");
  const PowellConfig pcfg = effective_powell(cfg);

  auto run_stage = [&](bool use_gc, const TransformParams& start) {
    SimilarityObjective sim{vol, xray, geom, cfg, use_gc};
    const auto a = start.as_array();
    return powell_minimize([&sim](const std::vector<double>& x) { return sim(x); },
                           {a.begin(), a.end()}, pcfg);
  };

  BaselineOutcome out;
  if (method == BaselineMethod::MIGC) {
    PowellResult mi_stage = run_stage(false, t_init);
    const TransformParams mid = TransformParams::from_array(
        {mi_stage.x[0], mi_stage.x[1], mi_stage.x[2], mi_stage.x[3],
         mi_stage.x[4], mi_stage.x[5]});
    PowellResult gc_stage = run_stage(true, mid);
    out.t_est = TransformParams::from_array(
        {gc_stage.x[0], gc_stage.x[1], gc_stage.x[2], gc_stage.x[3],
         gc_stage.x[4], gc_stage.x[5]});
    out.similarity = -gc_stage.f;
    out.n_evals = mi_stage.n_evals + gc_stage.n_evals;
    out.n_iter = mi_stage.n_iter + gc_stage.n_iter;
    out.eval_trace = std::move(mi_stage.eval_trace);
    out.eval_trace.insert(out.eval_trace.end(), gc_stage.eval_trace.begin(),
                          gc_stage.eval_trace.end());
    return out;
  }

  PowellResult stage = run_stage(method == BaselineMethod::GC, t_init);
  out.t_est = TransformParams::from_array(
      {stage.x[0], stage.x[1], stage.x[2], stage.x[3], stage.x[4], stage.x[5]});
  out.similarity = -stage.f;
  out.n_evals = stage.n_evals;
  out.n_iter = stage.n_iter;
  out.eval_trace = std::move(stage.eval_trace);
  return out;
}

}  // namespace rayreg
