#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rayreg/common.hpp"

namespace rayreg {

enum class ImageProvenance { Drr, SyntheticXray, Loaded, Feature };

std::string to_string(ImageProvenance p);
ImageProvenance provenance_from_string(const std::string& s);

// 2-D scalar image, row-major with top-left origin. DRR values are line
// integrals (dimensionless) and non-negative.
struct Image {
  int width = 0;
  int height = 0;
  double pixel_spacing_mm = 1.0;
  std::vector<float> values;
  ImageProvenance provenance = ImageProvenance::Loaded;

  Image() = default;
  Image(int w, int h, double spacing, ImageProvenance prov);

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  float at(int x, int y) const { return values[index(x, y)]; }
  float& at(int x, int y) { return values[index(x, y)]; }
};

// Bilinear interpolation at a continuous pixel coordinate (top-left
// origin; pixel (i, j) center at (i + 0.5, j + 0.5)). Points outside the
// pixel-center lattice return 0.
double sample_bilinear_px(const Image& img, double px, double py);

// Metadata JSON "<name>.img.json" plus raw little-endian float32,
// row-major. Bit-exact round-trip.
void save_image(const Image& img, const std::filesystem::path& json_path);
Image load_image(const std::filesystem::path& json_path);

// 8-bit binary PGM export, min-max windowed, for human inspection.
void write_pgm(const Image& img, const std::filesystem::path& path);

}  // namespace rayreg
