#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segsel/types.hpp"

namespace segsel {

// RGB raster with channel values in [0, 1].
struct ImageRgb {
  PlaneF r, g, b;

  Index height() const { return r.rows(); }
  Index width() const { return r.cols(); }
  bool empty() const { return r.size() == 0; }

  // Mean of the three channels; the gray plane every filter bank runs on.
  PlaneF luminance() const { return ((r + g + b) / 3.0f).eval(); }

  static ImageRgb constant(Index height, Index width, float rv, float gv, float bv);
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
};

using Palette = std::vector<Rgb8>;

// Reads a .ppm (P3/P6), .pgm (P2/P5) or .png file as an RGB raster.
// Gray and palette sources are expanded to RGB.
ImageRgb load_image(const std::string& path);

// Writes .ppm or .png depending on the file extension.
void save_image(const std::string& path, const ImageRgb& image);

// Reads a single-channel 8-bit raster: .pgm (P2/P5), gray8 .png, or a
// palette .png whose palette index is returned verbatim per pixel.
PlaneU8 load_label_raster(const std::string& path);

// Writes .pgm, or .png (gray8, or indexed when a palette is given).
void save_label_raster(const std::string& path, const PlaneU8& labels,
                       const std::optional<Palette>& palette = std::nullopt);

// The well-known bit-interleave pseudo-color table used by indexed
// segmentation masks; handy for writing viewable label rasters.
Palette make_label_palette(std::size_t n_entries);

}  // namespace segsel
