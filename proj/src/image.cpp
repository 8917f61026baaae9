#include "rayreg/image.hpp"

#include <algorithm>
#include <cmath>

#include "io_util.hpp"

namespace rayreg {

std::string to_string(ImageProvenance p) {
  switch (p) {
    case ImageProvenance::Drr: return "drr";
    case ImageProvenance::SyntheticXray: return "synthetic-xray";
    case ImageProvenance::Loaded: return "loaded";
    case ImageProvenance::Feature: return "feature";
  }
  throw FormatError("unknown image provenance value");
}

ImageProvenance provenance_from_string(const std::string& s) {
  if (s == "drr") return ImageProvenance::Drr;
  if (s == "synthetic-xray") return ImageProvenance::SyntheticXray;
  if (s == "loaded") return ImageProvenance::Loaded;
  if (s == "feature") return ImageProvenance::Feature;
  throw FormatError("unknown image provenance: " + s);
}

Image::Image(int w, int h, double spacing, ImageProvenance prov)
    : width(w), height(h), pixel_spacing_mm(spacing),
      values(std::size_t(w > 0 ? w : 0) * std::size_t(h > 0 ? h : 0), 0.0f),
      provenance(prov) {
  if (w <= 0 || h <= 0) {
    throw InvalidParameterError("image dimensions must be positive");
  }
  if (!(spacing > 0.0)) {
    throw InvalidParameterError("pixel spacing must be positive");
  }
}

double sample_bilinear_px(const Image& img, double px, double py) {
  // Continuous pixel coordinates; the center lattice spans
  // [0.5, width-0.5] x [0.5, height-0.5].
  const double gx = px - 0.5;
  const double gy = py - 0.5;
  if (!(gx >= 0.0 && gx <= img.width - 1 && gy >= 0.0 && gy <= img.height - 1)) {
    return 0.0;
  }
  int x0 = 0, y0 = 0;
  double fx = 0.0, fy = 0.0;
  if (img.width > 1) {
    x0 = std::min(static_cast<int>(gx), img.width - 2);
    fx = gx - x0;
  }
  if (img.height > 1) {
    y0 = std::min(static_cast<int>(gy), img.height - 2);
    fy = gy - y0;
  }
  const int x1 = img.width > 1 ? x0 + 1 : x0;
  const int y1 = img.height > 1 ? y0 + 1 : y0;
  const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
  const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
  const double v0 = v00 + fx * (v10 - v00);
  const double v1 = v01 + fx * (v11 - v01);
  return v0 + fy * (v1 - v0);
}

void save_image(const Image& img, const std::filesystem::path& json_path) {
  const auto raw_path = detail::raw_sibling(json_path);
  detail::json j;
  j["format"] = "rayreg-image";
  j["version"] = 1;
  j["width"] = img.width;
  j["height"] = img.height;
  j["pixel_spacing_mm"] = img.pixel_spacing_mm;
  j["provenance"] = to_string(img.provenance);
  j["dtype"] = "f32le";
  j["count"] = img.values.size();
  j["data_file"] = raw_path.filename().string();
  detail::write_json_file(j, json_path);
  detail::write_raw(img.values, raw_path);
}

Image load_image(const std::filesystem::path& json_path) {
  const auto j = detail::read_json_file(json_path);
  try {
    detail::require(j.at("format") == "rayreg-image",
                    "not an image file: " + json_path.string());
    detail::require(j.at("dtype") == "f32le",
                    "unsupported dtype in " + json_path.string());
    const int w = j.at("width"), h = j.at("height");
    detail::require(w > 0 && h > 0,
                    "non-positive dimensions in " + json_path.string());
    const std::size_t count = j.at("count");
    detail::require(count == std::size_t(w) * h,
                    "count does not match dimensions in " + json_path.string());
    Image img(w, h, j.at("pixel_spacing_mm"),
              provenance_from_string(j.at("provenance")));
    const auto raw_path =
        json_path.parent_path() / std::string(j.at("data_file"));
    img.values = detail::read_raw<float>(raw_path, count);
    return img;
  } catch (const detail::json::exception& e) {
    throw FormatError("bad image manifest " + json_path.string() + ": " +
                      e.what());
  }
}

void write_pgm(const Image& img, const std::filesystem::path& path) {
  const auto [lo_it, hi_it] =
      std::minmax_element(img.values.begin(), img.values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (float v : img.values) {
    const double u = range > 0.0 ? (v - lo) / range : 0.0;
    out.put(static_cast<char>(
        static_cast<unsigned char>(std::lround(255.0 * u))));
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace rayreg
