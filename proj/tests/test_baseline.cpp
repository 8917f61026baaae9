#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rayreg/baseline.hpp"
#include "rayreg/common.hpp"
#include "rayreg/drr.hpp"
#include "rayreg/feature.hpp"
#include "rayreg/rng.hpp"
#include "rayreg/volume.hpp"

using namespace rayreg;

namespace {

Patch patch_of(int rows, int cols, const std::vector<double>& v) {
  Patch p(rows, cols);
  p.values = v;
  return p;
}

Patch random_patch(int rows, int cols, std::uint64_t seed) {
  Patch p(rows, cols);
  Rng rng(seed);
  for (auto& v : p.values) v = rng.uniform(-2.0, 5.0);
  return p;
}

// Independent MI oracle: same definition (per-patch min-max to [0,1],
// equal-width bins, natural log), separate bookkeeping.
double mi_oracle(const Patch& a, const Patch& b, int bins) {
  const std::size_t n = a.values.size();
  auto bin_of = [bins](const std::vector<double>& v, std::size_t i) {
    double lo = v[0], hi = v[0];
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    if (hi <= lo) return 0;
    const double u = (v[i] - lo) / (hi - lo);
    return std::min(bins - 1, static_cast<int>(u * bins));
  };
  std::vector<std::vector<double>> joint(bins, std::vector<double>(bins, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    joint[bin_of(a.values, i)][bin_of(b.values, i)] += 1.0 / double(n);
  std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      pa[i] += joint[i][j];
      pb[j] += joint[i][j];
    }
  double mi = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j)
      if (joint[i][j] > 0.0)
        mi += joint[i][j] * std::log(joint[i][j] / (pa[i] * pb[j]));
  return mi;
}

// Independent GC oracle: central differences on interior pixels, Pearson
// correlation per direction, mean of the two.
double gc_oracle(const Patch& a, const Patch& b) {
  auto pearson = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
  };
  auto grads = [](const Patch& p, int axis) {
    std::vector<double> g;
    for (int r = 1; r < p.rows - 1; ++r)
      for (int c = 1; c < p.cols - 1; ++c)
        g.push_back(axis == 0 ? 0.5 * (p.at(r, c + 1) - p.at(r, c - 1))
                              : 0.5 * (p.at(r + 1, c) - p.at(r - 1, c)));
    return g;
  };
  return 0.5 * (pearson(grads(a, 0), grads(b, 0)) +
                pearson(grads(a, 1), grads(b, 1)));
}

}  // namespace

TEST_CASE("MI of a patch with itself: 16 uniform values, 16 bins -> ln 16") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = double(i);
  const Patch p = patch_of(4, 4, v);
  CHECK(mutual_information(p, p, 16) ==
        doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(std::log(16.0) == doctest::Approx(2.772588722239781).epsilon(1e-15));
}

TEST_CASE("MI of exactly independent patches is zero") {
  // All four (a, b) in {0,1}^2 combinations equally often.
  const Patch a = patch_of(2, 4, {0, 0, 1, 1, 0, 0, 1, 1});
  const Patch b = patch_of(2, 4, {0, 1, 0, 1, 0, 1, 0, 1});
  CHECK(mutual_information(a, b, 2) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("MI is symmetric, nonnegative, zero against a constant") {
  const Patch a = random_patch(8, 9, 4);
  const Patch b = random_patch(8, 9, 5);
  const double mab = mutual_information(a, b, 16);
  const double mba = mutual_information(b, a, 16);
  CHECK(mab == doctest::Approx(mba).epsilon(1e-12));
  CHECK(mab >= 0.0);
  Patch flat(8, 9);
  std::fill(flat.values.begin(), flat.values.end(), 3.0);
  CHECK(mutual_information(a, flat, 16) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("MI matches the independent oracle on random patches") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Patch a = random_patch(12, 10, seed);
    const Patch b = random_patch(12, 10, seed + 100);
    for (int bins : {2, 8, 32}) {
      CHECK(mutual_information(a, b, bins) ==
            doctest::Approx(mi_oracle(a, b, bins)).epsilon(1e-12));
    }
  }
}

TEST_CASE("MI input validation") {
  const Patch a = random_patch(4, 4, 1);
  const Patch b = random_patch(4, 5, 2);
  CHECK_THROWS_AS(mutual_information(a, b, 8), ShapeError);
  CHECK_THROWS_AS(mutual_information(a, a, 1), InvalidParameterError);
}

TEST_CASE("GC canonical values: self 1, negated -1, constant 0") {
  const Patch a = random_patch(7, 8, 11);
  CHECK(gradient_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Patch neg = a;
  for (auto& v : neg.values) v = -v;
  CHECK(gradient_correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  Patch flat(7, 8);
  std::fill(flat.values.begin(), flat.values.end(), 2.5);
  CHECK(gradient_correlation(a, flat) == doctest::Approx(0.0));
  // Affine intensity changes leave GC invariant.
  Patch affine = a;
  for (auto& v : affine.values) v = 3.0 * v + 10.0;
  CHECK(gradient_correlation(a, affine) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("GC matches the independent oracle on random patches") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Patch a = random_patch(9, 11, seed + 7);
    const Patch b = random_patch(9, 11, seed + 200);
    CHECK(gradient_correlation(a, b) ==
          doctest::Approx(gc_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("GC input validation") {
  const Patch a = random_patch(4, 4, 1);
  const Patch b = random_patch(4, 5, 2);
  CHECK_THROWS_AS(gradient_correlation(a, b), ShapeError);
  const Patch tiny = random_patch(2, 4, 3);
  CHECK_THROWS_AS(gradient_correlation(tiny, tiny), ShapeError);
}

TEST_CASE("Powell minimizes a diagonal quadratic to 1e-6") {
  const std::vector<double> c = {1.5, -2.0, 0.25, 4.0};
  const std::vector<double> lam = {1.0, 10.0, 0.1, 3.0};
  const Objective f = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      s += lam[i] * (x[i] - c[i]) * (x[i] - c[i]);
    return s;
  };
  PowellConfig cfg;
  const PowellResult res = powell_minimize(f, {0, 0, 0, 0}, cfg);
  CHECK(res.converged);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(std::abs(res.x[i] - c[i]) < 1e-6);
  CHECK(res.f < 1e-10);
  CHECK(res.n_evals > 0);
  CHECK(res.eval_trace.size() == static_cast<std::size_t>(res.n_evals));
}

TEST_CASE("Powell reaches the Rosenbrock minimum from (-1.2, 1)") {
  const Objective f = [](const std::vector<double>& x) {
    const double a = x[1] - x[0] * x[0];
    const double b = 1.0 - x[0];
    return 100.0 * a * a + b * b;
  };
  PowellConfig cfg;
  cfg.max_iter = 200;
  const PowellResult res = powell_minimize(f, {-1.2, 1.0}, cfg);
  CHECK(res.converged);
  CHECK(std::abs(res.x[0] - 1.0) < 1e-3);
  CHECK(std::abs(res.x[1] - 1.0) < 1e-3);
}

TEST_CASE("Powell is deterministic and respects its caps") {
  const Objective f = [](const std::vector<double>& x) {
    return std::sin(3 * x[0]) + x[0] * x[0] + std::cos(2 * x[1]) + x[1] * x[1];
  };
  PowellConfig cfg;
  const PowellResult a = powell_minimize(f, {2.0, -2.0}, cfg);
  const PowellResult b = powell_minimize(f, {2.0, -2.0}, cfg);
  CHECK(a.x == b.x);
  CHECK(a.n_evals == b.n_evals);
  CHECK(a.n_iter <= cfg.max_iter);
  CHECK(a.n_evals <= cfg.max_evals);

  PowellConfig capped = cfg;
  capped.max_iter = 1;
  const PowellResult c = powell_minimize(f, {2.0, -2.0}, capped);
  CHECK(c.n_iter <= 1);
}

TEST_CASE("Powell scale vector changes the initial direction set") {
  // A narrow valley handled badly at unit scale converges with scaling.
  const Objective f = [](const std::vector<double>& x) {
    return x[0] * x[0] + 1e4 * x[1] * x[1];
  };
  PowellConfig cfg;
  cfg.scales = {1.0, 0.01};
  const PowellResult res = powell_minimize(f, {3.0, 0.5}, cfg);
  CHECK(std::abs(res.x[0]) < 1e-5);
  CHECK(std::abs(res.x[1]) < 1e-5);
  PowellConfig bad = cfg;
  bad.scales = {1.0};
  CHECK_THROWS_AS(powell_minimize(f, {1.0, 1.0}, bad), InvalidParameterError);
  CHECK_THROWS_AS(powell_minimize(f, {}, cfg), InvalidParameterError);
}

TEST_CASE("Powell surfaces NaN objectives as DivergedError") {
  const Objective f = [](const std::vector<double>& x) {
    return std::sqrt(x[0]);  // NaN for x < 0
  };
  PowellConfig cfg;
  CHECK_THROWS_AS(powell_minimize(f, {0.5}, cfg), DivergedError);
}

TEST_CASE("method name round trip") {
  for (auto m : {BaselineMethod::MI, BaselineMethod::GC, BaselineMethod::MIGC}) {
    CHECK(baseline_method_from_string(to_string(m)) == m);
  }
  CHECK(baseline_method_from_string("mi+gc") == BaselineMethod::MIGC);
  CHECK_THROWS_AS(baseline_method_from_string("ncc"), InvalidParameterError);
}

TEST_CASE("GC registration recovers a small pose offset on the plate") {
  const Volume plate = make_phantom(plate_phantom_spec(1.0));
  ProjectionGeometry geom;
  geom.det_width_px = 96;
  geom.det_height_px = 96;
  geom.pixel_spacing_mm = 2.3;
  const TransformParams t_true{1.0, -1.0, 500.0, 2.0, 0.0, 0.0};
  const Image xray = render_drr(plate, t_true, geom);

  BaselineConfig cfg;
  cfg.roi = default_roi_spec(plate, 1.2, 40, 76);
  cfg.render.step_mm = 1.0;
  cfg.powell.ftol = 1e-6;
  cfg.powell.max_iter = 20;
  const BaselineOutcome res = register_baseline(
      BaselineMethod::GC, plate, xray, geom, {0, 0, 500, 0, 0, 0}, cfg);
  CHECK(std::abs(res.t_est.t_x - 1.0) < 0.1);
  CHECK(std::abs(res.t_est.t_y + 1.0) < 0.1);
  CHECK(std::abs(res.t_est.t_theta - 2.0) < 0.2);
  CHECK(res.similarity > 0.99);
  CHECK(res.n_evals > 0);
  CHECK(res.eval_trace.size() == static_cast<std::size_t>(res.n_evals));
}

TEST_CASE("MI+GC equals MI followed by GC from the MI optimum") {
  const Volume plate = make_phantom(plate_phantom_spec(1.0));
  ProjectionGeometry geom;
  geom.det_width_px = 96;
  geom.det_height_px = 96;
  geom.pixel_spacing_mm = 2.3;
  const TransformParams t_true{0.5, 0.5, 495.0, -1.0, 0.0, 0.0};
  const Image xray = render_drr(plate, t_true, geom);

  BaselineConfig cfg;
  cfg.roi = default_roi_spec(plate, 1.2, 40, 76);
  cfg.render.step_mm = 1.0;
  cfg.powell.ftol = 1e-4;
  cfg.powell.max_iter = 8;
  const TransformParams t0{0, 0, 500, 0, 0, 0};

  const BaselineOutcome mi =
      register_baseline(BaselineMethod::MI, plate, xray, geom, t0, cfg);
  const BaselineOutcome gc =
      register_baseline(BaselineMethod::GC, plate, xray, geom, mi.t_est, cfg);
  const BaselineOutcome migc =
      register_baseline(BaselineMethod::MIGC, plate, xray, geom, t0, cfg);
  CHECK(migc.t_est.t_x == gc.t_est.t_x);
  CHECK(migc.t_est.t_z == gc.t_est.t_z);
  CHECK(migc.t_est.t_beta == gc.t_est.t_beta);
  CHECK(migc.n_evals == mi.n_evals + gc.n_evals);
  CHECK(migc.similarity == gc.similarity);
}

TEST_CASE("baseline rejects invalid input") {
  const Volume plate = make_phantom(plate_phantom_spec(2.0));
  ProjectionGeometry geom;
  geom.det_width_px = 32;
  geom.det_height_px = 32;
  geom.pixel_spacing_mm = 4.0;
  Image xray(16, 16, 4.0, ImageProvenance::Drr);  // wrong size
  BaselineConfig cfg;
  cfg.roi = default_roi_spec(plate, 1.2, 10, 10);
  CHECK_THROWS_AS(register_baseline(BaselineMethod::GC, plate, xray, geom,
                                    {0, 0, 500, 0, 0, 0}, cfg),
                  ShapeError);
}
