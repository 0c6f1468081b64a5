#include "segsel/image.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "segsel/error.hpp"

namespace segsel {
namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

// Readers dispatch on content, not extension; external tools are sloppy
// about matching the two.
bool is_png_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), 8);
  static const unsigned char kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return in.gcount() == 8 && std::equal(magic, magic + 8, kPng);
}

// --- PNM -------------------------------------------------------------------

int pnm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, then parses one non-negative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("pnm: malformed header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

struct PnmData {
  int magic = 0;  // 2/3 ascii, 5/6 binary
  Index width = 0, height = 0;
  int maxval = 0;
  std::vector<std::uint8_t> samples;  // interleaved, 1 or 3 per pixel
  int channels() const { return (magic == 3 || magic == 6) ? 3 : 1; }
};

PnmData load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char p = 0, m = 0;
  in.get(p);
  in.get(m);
  if (p != 'P' || m < '2' || m > '6' || m == '4') throw IoError("pnm: unsupported magic in " + path);
  PnmData d;
  d.magic = m - '0';
  d.width = pnm_next_token(in);
  d.height = pnm_next_token(in);
  d.maxval = pnm_next_token(in);
  if (d.width <= 0 || d.height <= 0) throw IoError("pnm: empty raster in " + path);
  if (d.maxval <= 0 || d.maxval > 255) throw IoError("pnm: unsupported maxval in " + path);
  const std::size_t n = static_cast<std::size_t>(d.width) * d.height * d.channels();
  d.samples.resize(n);
  if (d.magic >= 5) {
    in.read(reinterpret_cast<char*>(d.samples.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("pnm: truncated pixel data in " + path);
  } else {
    for (std::size_t i = 0; i < n; ++i) d.samples[i] = static_cast<std::uint8_t>(pnm_next_token(in));
  }
  return d;
}

void save_pnm(const std::string& path, int magic, Index width, Index height,
              const std::uint8_t* samples, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << 'P' << magic << '\n' << width << ' ' << height << '\n' << 255 << '\n';
  out.write(reinterpret_cast<const char*>(samples), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path);
}

// --- PNG -------------------------------------------------------------------

struct PngCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, PngCloser>;

struct PngImage {
  Index width = 0, height = 0;
  int color_type = 0;
  std::vector<std::uint8_t> rows;  // packed rows, stride = width * samples
  int samples = 0;                 // per pixel after transforms
  Palette palette;                 // filled for indexed images
};

PngImage load_png(const std::string& path, bool keep_palette_indices) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    if (keep_palette_indices) {
      if (bit_depth < 8) png_set_packing(png);  // one index per byte
    } else {
      png_set_palette_to_rgb(png);
    }
  }
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) && !(color_type == PNG_COLOR_TYPE_PALETTE && keep_palette_indices))
    png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);

  png_read_update_info(png, info);

  PngImage out;
  out.width = static_cast<Index>(png_get_image_width(png, info));
  out.height = static_cast<Index>(png_get_image_height(png, info));
  out.color_type = color_type;
  out.samples = static_cast<int>(png_get_channels(png, info));

  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_colorp pal = nullptr;
    int n_pal = 0;
    if (png_get_PLTE(png, info, &pal, &n_pal) == PNG_INFO_PLTE) {
      out.palette.resize(static_cast<std::size_t>(n_pal));
      for (int i = 0; i < n_pal; ++i) out.palette[static_cast<std::size_t>(i)] = {pal[i].red, pal[i].green, pal[i].blue};
    }
  }

  const std::size_t stride = static_cast<std::size_t>(out.width) * out.samples;
  out.rows.resize(stride * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(out.height));
  for (Index y = 0; y < out.height; ++y) row_ptrs[static_cast<std::size_t>(y)] = out.rows.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void save_png(const std::string& path, Index width, Index height, int color_type,
              const std::uint8_t* data, const Palette* palette) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_color> pal;
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    if (!palette || palette->empty()) throw ConfigError("png: palette required for indexed output");
    pal.resize(palette->size());
    for (std::size_t i = 0; i < palette->size(); ++i) pal[i] = {(*palette)[i].r, (*palette)[i].g, (*palette)[i].b};
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  }

  png_write_info(png, info);
  const int samples = (color_type == PNG_COLOR_TYPE_RGB) ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * samples;
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (Index y = 0; y < height; ++y)
    row_ptrs[static_cast<std::size_t>(y)] = const_cast<png_bytep>(data + stride * static_cast<std::size_t>(y));
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageRgb rgb_from_samples(Index height, Index width, int channels, const std::uint8_t* s) {
  ImageRgb img;
  img.r.resize(height, width);
  img.g.resize(height, width);
  img.b.resize(height, width);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels;
      const float rv = s[i] / 255.0f;
      const float gv = channels == 3 ? s[i + 1] / 255.0f : rv;
      const float bv = channels == 3 ? s[i + 2] / 255.0f : rv;
      img.r(y, x) = rv;
      img.g(y, x) = gv;
      img.b(y, x) = bv;
    }
  }
  return img;
}

}  // namespace

ImageRgb ImageRgb::constant(Index height, Index width, float rv, float gv, float bv) {
  ImageRgb img;
  img.r = PlaneF::Constant(height, width, rv);
  img.g = PlaneF::Constant(height, width, gv);
  img.b = PlaneF::Constant(height, width, bv);
  return img;
}

ImageRgb load_image(const std::string& path) {
  if (is_png_file(path)) {
    PngImage png = load_png(path, /*keep_palette_indices=*/false);
    if (png.samples != 1 && png.samples != 3)
      throw IoError("png: unexpected channel count in " + path);
    return rgb_from_samples(png.height, png.width, png.samples, png.rows.data());
  }
  PnmData d = load_pnm(path);
  ImageRgb img = rgb_from_samples(d.height, d.width, d.channels(), d.samples.data());
  if (d.maxval != 255) {
    const float k = 255.0f / static_cast<float>(d.maxval);
    img.r *= k;
    img.g *= k;
    img.b *= k;
  }
  return img;
}

void save_image(const std::string& path, const ImageRgb& image) {
  if (image.empty()) throw ConfigError("save_image: empty image");
  const Index h = image.height(), w = image.width();
  std::vector<std::uint8_t> samples(static_cast<std::size_t>(h) * w * 3);
  auto to8 = [](float v) {
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<std::uint8_t>(v * 255.0f + 0.5f);
  };
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
      samples[i] = to8(image.r(y, x));
      samples[i + 1] = to8(image.g(y, x));
      samples[i + 2] = to8(image.b(y, x));
    }
  if (has_suffix(path, ".png")) {
    save_png(path, w, h, PNG_COLOR_TYPE_RGB, samples.data(), nullptr);
  } else {
    save_pnm(path, 6, w, h, samples.data(), samples.size());
  }
}

PlaneU8 load_label_raster(const std::string& path) {
  if (is_png_file(path)) {
    PngImage png = load_png(path, /*keep_palette_indices=*/true);
    if (png.samples != 1)
      throw IoError("label raster must be single-channel or indexed: " + path);
    PlaneU8 labels(png.height, png.width);
    std::memcpy(labels.data(), png.rows.data(), png.rows.size());
    return labels;
  }
  PnmData d = load_pnm(path);
  if (d.channels() != 1) throw IoError("label raster must be single-channel: " + path);
  PlaneU8 labels(d.height, d.width);
  std::memcpy(labels.data(), d.samples.data(), d.samples.size());
  return labels;
}

void save_label_raster(const std::string& path, const PlaneU8& labels,
                       const std::optional<Palette>& palette) {
  if (labels.size() == 0) throw ConfigError("save_label_raster: empty raster");
  if (has_suffix(path, ".png")) {
    save_png(path, labels.cols(), labels.rows(),
             palette ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY, labels.data(),
             palette ? &*palette : nullptr);
  } else {
    save_pnm(path, 5, labels.cols(), labels.rows(), labels.data(),
             static_cast<std::size_t>(labels.size()));
  }
}

Palette make_label_palette(std::size_t n_entries) {
  Palette pal(n_entries);
  for (std::size_t i = 0; i < n_entries; ++i) {
    std::uint8_t r = 0, g = 0, b = 0;
    std::size_t c = i;
    for (int shift = 7; shift >= 0 && c; --shift) {
      r = static_cast<std::uint8_t>(r | ((c & 1) << shift));
      g = static_cast<std::uint8_t>(g | (((c >> 1) & 1) << shift));
      b = static_cast<std::uint8_t>(b | (((c >> 2) & 1) << shift));
      c >>= 3;
    }
    pal[i] = {r, g, b};
  }
  return pal;
}

}  // namespace segsel
