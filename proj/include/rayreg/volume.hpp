#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "rayreg/common.hpp"

namespace rayreg {

// Voxel attenuation map (1/mm). Storage is x-fastest: index(x, y, z) =
// x + nx * (y + ny * z). `origin` is the object-local position of the
// center of voxel (0, 0, 0). Immutable after construction; concurrent
// read-only sampling is safe.
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();  // mm per voxel
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();   // mm, voxel (0,0,0) center
  std::vector<float> data;
  Eigen::Vector3d gravity_center = Eigen::Vector3d::Zero();  // cached

  Volume() = default;
  Volume(int nx_, int ny_, int nz_, const Eigen::Vector3d& spacing_,
         const Eigen::Vector3d& origin_, std::vector<float> data_);

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }

  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    return origin + Eigen::Vector3d(x * spacing.x(), y * spacing.y(),
                                    z * spacing.z());
  }

  // Extent of the voxel-center lattice (sampling support).
  Eigen::Vector3d lattice_min() const { return origin; }
  Eigen::Vector3d lattice_max() const {
    return origin + Eigen::Vector3d((nx - 1) * spacing.x(),
                                    (ny - 1) * spacing.y(),
                                    (nz - 1) * spacing.z());
  }

  // Attenuation-weighted centroid of voxel centers; recomputed from data.
  Eigen::Vector3d compute_gravity_center() const;
};

// Trilinear interpolation over the 8 surrounding voxel centers. Points
// outside the voxel-center lattice return 0 (vacuum).
double sample_trilinear(const Volume& vol, const Eigen::Vector3d& p);

// --- Synthetic phantoms --------------------------------------------------

struct BoxPrim {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_size = Eigen::Vector3d::Ones();  // mm
  double mu = 0.02;
};

struct SpherePrim {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 5.0;
  double mu = 0.02;
};

// Axis-aligned cylinder; axis 0 = x, 1 = y, 2 = z.
struct CylinderPrim {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  int axis = 2;
  double radius = 2.0;
  double half_length = 5.0;
  double mu = 0.02;
};

using Primitive = std::variant<BoxPrim, SpherePrim, CylinderPrim>;

struct PhantomSpec {
  int nx = 0, ny = 0, nz = 0;
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  // Volume is centered on the local origin unless an origin is given.
  bool centered = true;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  // Applied in order; a voxel center inside a primitive takes that
  // primitive's mu (later primitives override, so holes are mu=0 entries).
  std::vector<Primitive> primitives;
};

bool point_in_primitive(const Primitive& prim, const Eigen::Vector3d& p);

// Rasterizes a PhantomSpec (voxel-center membership test). Throws
// EmptyObjectError for an empty primitive list.
Volume make_phantom(const PhantomSpec& spec);

// Built-in phantoms. "plate": asymmetric 40x20x8 mm slab with a stud, an
// edge lip and three unequal through-holes, so that all 6 pose parameters
// are observable in projection. "cube": uniform 20 mm cube, mu=0.02/mm,
// with the geometric faces midway between inside and outside voxel
// centers. "sphere": uniform 10 mm radius ball.
PhantomSpec plate_phantom_spec(double spacing_mm = 0.5);
PhantomSpec cube_phantom_spec(double side_mm = 20.0, double mu = 0.02,
                              double spacing_mm = 0.5);
PhantomSpec sphere_phantom_spec(double radius_mm = 10.0, double mu = 0.02,
                                double spacing_mm = 0.5);

// --- File I/O ------------------------------------------------------------
// Metadata JSON "<name>.vol.json" plus a raw little-endian float32 file in
// x-fastest order. Round-trips are bit-exact.

void save_volume(const Volume& vol, const std::filesystem::path& json_path);
Volume load_volume(const std::filesystem::path& json_path);

}  // namespace rayreg
