#include "rayreg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "io_util.hpp"

namespace rayreg {

Volume::Volume(int nx_, int ny_, int nz_, const Eigen::Vector3d& spacing_,
               const Eigen::Vector3d& origin_, std::vector<float> data_)
    : nx(nx_), ny(ny_), nz(nz_), spacing(spacing_), origin(origin_),
      data(std::move(data_)) {
  if (nx <= 0 || ny <= 0 || nz <= 0) {
    throw InvalidParameterError("volume dimensions must be positive");
  }
  if (!(spacing.minCoeff() > 0.0)) {
    throw InvalidParameterError("voxel spacing must be positive");
  }
  const std::size_t expected =
      std::size_t(nx) * std::size_t(ny) * std::size_t(nz);
  if (data.size() != expected) {
    throw ShapeError("volume data has " + std::to_string(data.size()) +
                     " values, expected " + std::to_string(expected));
  }
  gravity_center = compute_gravity_center();
}

Eigen::Vector3d Volume::compute_gravity_center() const {
  double mass = 0.0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const double mu = at(x, y, z);
        if (mu > 0.0) {
          mass += mu;
          acc += mu * voxel_center(x, y, z);
        }
      }
    }
  }
  if (mass <= 0.0) return 0.5 * (lattice_min() + lattice_max());
  return acc / mass;
}

double sample_trilinear(const Volume& vol, const Eigen::Vector3d& p) {
  double gx = (p.x() - vol.origin.x()) / vol.spacing.x();
  double gy = (p.y() - vol.origin.y()) / vol.spacing.y();
  double gz = (p.z() - vol.origin.z()) / vol.spacing.z();
  // A point mathematically on the lattice boundary can land an ulp outside
  // after the mm -> grid division; tolerate that and clamp back.
  constexpr double kEdge = 1e-9;
  if (!(gx >= -kEdge && gx <= vol.nx - 1 + kEdge && gy >= -kEdge &&
        gy <= vol.ny - 1 + kEdge && gz >= -kEdge &&
        gz <= vol.nz - 1 + kEdge)) {
    return 0.0;
  }
  gx = std::clamp(gx, 0.0, double(vol.nx - 1));
  gy = std::clamp(gy, 0.0, double(vol.ny - 1));
  gz = std::clamp(gz, 0.0, double(vol.nz - 1));
  int x0 = 0, y0 = 0, z0 = 0;
  double fx = 0.0, fy = 0.0, fz = 0.0;
  if (vol.nx > 1) {
    x0 = std::min(static_cast<int>(gx), vol.nx - 2);
    fx = gx - x0;
  }
  if (vol.ny > 1) {
    y0 = std::min(static_cast<int>(gy), vol.ny - 2);
    fy = gy - y0;
  }
  if (vol.nz > 1) {
    z0 = std::min(static_cast<int>(gz), vol.nz - 2);
    fz = gz - z0;
  }
  const int x1 = vol.nx > 1 ? x0 + 1 : x0;
  const int y1 = vol.ny > 1 ? y0 + 1 : y0;
  const int z1 = vol.nz > 1 ? z0 + 1 : z0;

  const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
  const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
  const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
  const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);

  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

bool point_in_primitive(const Primitive& prim, const Eigen::Vector3d& p) {
  return std::visit(
      [&p](const auto& g) -> bool {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, BoxPrim>) {
          const Eigen::Vector3d d = (p - g.center).cwiseAbs();
          return d.x() <= g.half_size.x() && d.y() <= g.half_size.y() &&
                 d.z() <= g.half_size.z();
        } else if constexpr (std::is_same_v<T, SpherePrim>) {
          return (p - g.center).squaredNorm() <= g.radius * g.radius;
        } else {
          const Eigen::Vector3d d = p - g.center;
          const int a = g.axis;
          const int u = (a + 1) % 3, v = (a + 2) % 3;
          return std::abs(d[a]) <= g.half_length &&
                 d[u] * d[u] + d[v] * d[v] <= g.radius * g.radius;
        }
      },
      prim);
}

Volume make_phantom(const PhantomSpec& spec) {
  if (spec.nx <= 0 || spec.ny <= 0 || spec.nz <= 0) {
    throw InvalidParameterError("phantom dimensions must be positive");
  }
  if (!(spec.spacing.minCoeff() > 0.0)) {
    throw InvalidParameterError("phantom spacing must be positive");
  }
  if (spec.primitives.empty()) {
    throw EmptyObjectError("phantom spec has no primitives");
  }
  Eigen::Vector3d origin = spec.origin;
  if (spec.centered) {
    origin = -0.5 * Eigen::Vector3d((spec.nx - 1) * spec.spacing.x(),
                                    (spec.ny - 1) * spec.spacing.y(),
                                    (spec.nz - 1) * spec.spacing.z());
  }
  std::vector<float> data(std::size_t(spec.nx) * spec.ny * spec.nz, 0.0f);
  std::size_t idx = 0;
  for (int z = 0; z < spec.nz; ++z) {
    for (int y = 0; y < spec.ny; ++y) {
      for (int x = 0; x < spec.nx; ++x, ++idx) {
        const Eigen::Vector3d p =
            origin + Eigen::Vector3d(x * spec.spacing.x(), y * spec.spacing.y(),
                                     z * spec.spacing.z());
        for (const auto& prim : spec.primitives) {
          if (point_in_primitive(prim, p)) {
            data[idx] = static_cast<float>(std::visit(
                [](const auto& g) { return g.mu; }, prim));
          }
        }
      }
    }
  }
  return Volume(spec.nx, spec.ny, spec.nz, spec.spacing, origin,
                std::move(data));
}

PhantomSpec plate_phantom_spec(double spacing_mm) {
  if (!(spacing_mm > 0.0)) {
    throw InvalidParameterError("spacing must be positive");
  }
  PhantomSpec spec;
  spec.spacing = Eigen::Vector3d::Constant(spacing_mm);
  spec.centered = false;
  // Extents cover the slab (|x|<=20, |y|<=10, |z|<=4), the stud (z up to 8)
  // and the lip, with a one-voxel vacuum margin all around.
  const Eigen::Vector3d lo(-21.0, -11.0, -5.0);
  const Eigen::Vector3d hi(21.0, 11.0, 9.0);
  spec.origin = lo;
  spec.nx = static_cast<int>(std::lround((hi.x() - lo.x()) / spacing_mm)) + 1;
  spec.ny = static_cast<int>(std::lround((hi.y() - lo.y()) / spacing_mm)) + 1;
  spec.nz = static_cast<int>(std::lround((hi.z() - lo.z()) / spacing_mm)) + 1;
  // Slab with an off-center stud (+z) and an edge lip, three unequal
  // through-holes. Deliberately asymmetric in every axis so all six pose
  // parameters have a visible projected effect.
  spec.primitives = {
      BoxPrim{{0.0, 0.0, 0.0}, {20.0, 10.0, 4.0}, 0.02},
      BoxPrim{{12.0, 5.0, 6.0}, {4.0, 3.0, 2.0}, 0.03},
      BoxPrim{{-18.0, 0.0, 5.0}, {2.0, 10.0, 1.0}, 0.025},
      CylinderPrim{{-10.0, -3.0, 0.0}, 2, 2.5, 4.2, 0.0},
      CylinderPrim{{2.0, 4.0, 0.0}, 2, 1.8, 4.2, 0.0},
      CylinderPrim{{10.0, -5.0, 0.0}, 2, 1.2, 4.2, 0.0},
  };
  return spec;
}

PhantomSpec cube_phantom_spec(double side_mm, double mu, double spacing_mm) {
  if (!(side_mm > 0.0) || !(spacing_mm > 0.0) || !(mu > 0.0)) {
    throw InvalidParameterError("cube phantom needs positive side/mu/spacing");
  }
  const long steps = std::lround(side_mm / spacing_mm);
  if (steps < 2 || steps % 2 != 0 ||
      std::abs(steps * spacing_mm - side_mm) > 1e-9) {
    throw InvalidParameterError(
        "cube side must be an even multiple of the spacing");
  }
  PhantomSpec spec;
  spec.spacing = Eigen::Vector3d::Constant(spacing_mm);
  spec.centered = true;
  // n even: voxel centers sit at odd multiples of spacing/2, so the cube
  // faces at +-side/2 fall exactly midway between an inside and an outside
  // voxel center. Two vacuum layers of margin per side.
  spec.nx = spec.ny = spec.nz = static_cast<int>(steps) + 4;
  const double h = 0.5 * side_mm;
  spec.primitives = {BoxPrim{{0.0, 0.0, 0.0}, {h, h, h}, mu}};
  return spec;
}

PhantomSpec sphere_phantom_spec(double radius_mm, double mu,
                                double spacing_mm) {
  if (!(radius_mm > 0.0) || !(spacing_mm > 0.0) || !(mu > 0.0)) {
    throw InvalidParameterError(
        "sphere phantom needs positive radius/mu/spacing");
  }
  PhantomSpec spec;
  spec.spacing = Eigen::Vector3d::Constant(spacing_mm);
  spec.centered = true;
  const int half = static_cast<int>(std::ceil(radius_mm / spacing_mm)) + 2;
  spec.nx = spec.ny = spec.nz = 2 * half + 1;
  spec.primitives = {SpherePrim{{0.0, 0.0, 0.0}, radius_mm, mu}};
  return spec;
}

void save_volume(const Volume& vol, const std::filesystem::path& json_path) {
  const auto raw_path = detail::raw_sibling(json_path);
  detail::json j;
  j["format"] = "rayreg-volume";
  j["version"] = 1;
  j["nx"] = vol.nx;
  j["ny"] = vol.ny;
  j["nz"] = vol.nz;
  j["spacing_mm"] = {vol.spacing.x(), vol.spacing.y(), vol.spacing.z()};
  j["origin_mm"] = {vol.origin.x(), vol.origin.y(), vol.origin.z()};
  j["dtype"] = "f32le";
  j["count"] = vol.data.size();
  j["data_file"] = raw_path.filename().string();
  detail::write_json_file(j, json_path);
  detail::write_raw(vol.data, raw_path);
}

Volume load_volume(const std::filesystem::path& json_path) {
  const auto j = detail::read_json_file(json_path);
  try {
    detail::require(j.at("format") == "rayreg-volume",
                    "not a volume file: " + json_path.string());
    detail::require(j.at("dtype") == "f32le",
                    "unsupported dtype in " + json_path.string());
    const int nx = j.at("nx"), ny = j.at("ny"), nz = j.at("nz");
    detail::require(nx > 0 && ny > 0 && nz > 0,
                    "non-positive dimensions in " + json_path.string());
    const auto sp = j.at("spacing_mm");
    const auto og = j.at("origin_mm");
    detail::require(sp.size() == 3 && og.size() == 3,
                    "bad spacing/origin in " + json_path.string());
    const std::size_t count = j.at("count");
    detail::require(count == std::size_t(nx) * ny * nz,
                    "count does not match dimensions in " + json_path.string());
    const auto raw_path =
        json_path.parent_path() / std::string(j.at("data_file"));
    auto data = detail::read_raw<float>(raw_path, count);
    const Eigen::Vector3d spacing(sp[0].get<double>(), sp[1].get<double>(),
                                  sp[2].get<double>());
    const Eigen::Vector3d origin(og[0].get<double>(), og[1].get<double>(),
                                 og[2].get<double>());
    return Volume(nx, ny, nz, spacing, origin, std::move(data));
  } catch (const detail::json::exception& e) {
    throw FormatError("bad volume manifest " + json_path.string() + ": " +
                      e.what());
  }
}

}  // namespace rayreg
