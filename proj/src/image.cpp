#include "scenechar/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace scenechar {

namespace {

void check_image(const Tensor& image) {
  if (image.rank() != 3)
    throw std::invalid_argument("image must be [C,H,W], got " +
                                shape_to_string(image.shape()));
}

// Bilinear read at fractional (y, x) with taps clamped to the border.
double sample_clamped(const Tensor& image, std::size_t c, double y, double x) {
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(image.extent(1));
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(image.extent(2));
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  const double dy = y - fy;
  const double dx = x - fx;
  const auto at = [&](std::ptrdiff_t iy, std::ptrdiff_t ix) {
    iy = std::clamp<std::ptrdiff_t>(iy, 0, h - 1);
    ix = std::clamp<std::ptrdiff_t>(ix, 0, w - 1);
    return image(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
  };
  const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(fy);
  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(fx);
  const double top = at(iy, ix) * (1.0 - dx) + at(iy, ix + 1) * dx;
  const double bottom = at(iy + 1, ix) * (1.0 - dx) + at(iy + 1, ix + 1) * dx;
  return top * (1.0 - dy) + bottom * dy;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Tensor grayscale(const Tensor& rgb) {
  check_image(rgb);
  if (rgb.extent(0) != 3)
    throw std::invalid_argument("grayscale expects 3 channels, got " +
                                std::to_string(rgb.extent(0)));
  const std::size_t h = rgb.extent(1);
  const std::size_t w = rgb.extent(2);
  Tensor out({1, h, w});
  const std::size_t plane = h * w;
  const double* r = rgb.data();
  const double* g = r + plane;
  const double* b = g + plane;
  for (std::size_t i = 0; i < plane; ++i)
    out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

Tensor resize_bilinear(const Tensor& image, Shape2D target) {
  check_image(image);
  if (target.height < 1 || target.width < 1)
    throw std::invalid_argument("resize target must be >= 1x1");
  const std::size_t channels = image.extent(0);
  const double scale_y =
      static_cast<double>(image.extent(1)) / static_cast<double>(target.height);
  const double scale_x =
      static_cast<double>(image.extent(2)) / static_cast<double>(target.width);
  Tensor out({channels, target.height, target.width});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < target.height; ++y) {
      const double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
      for (std::size_t x = 0; x < target.width; ++x) {
        const double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
        out(c, y, x) = sample_clamped(image, c, sy, sx);
      }
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double angle_deg) {
  check_image(image);
  if (!std::isfinite(angle_deg))
    throw std::invalid_argument("rotation angle must be finite");
  const std::size_t channels = image.extent(0);
  const std::size_t h = image.extent(1);
  const std::size_t w = image.extent(2);

  double mean = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) mean += image[i];
  mean /= static_cast<double>(image.size());

  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double cos_a = std::cos(rad);
  const double sin_a = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;

  Tensor out({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        // inverse map: rotate the output coordinate back into the source
        const double ry = static_cast<double>(y) - cy;
        const double rx = static_cast<double>(x) - cx;
        const double sy = cy - sin_a * rx + cos_a * ry;
        const double sx = cx + cos_a * rx + sin_a * ry;
        const bool inside = sy >= 0.0 && sy <= static_cast<double>(h) - 1.0 &&
                            sx >= 0.0 && sx <= static_cast<double>(w) - 1.0;
        out(c, y, x) = inside ? sample_clamped(image, c, sy, sx) : mean;
      }
    }
  }
  return out;
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5")
    throw std::runtime_error("unsupported PGM (want binary P5): " + path.string());
  const auto next_value = [&]() -> std::size_t {
    // skip whitespace and '#' comment lines
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    std::size_t value = 0;
    if (!(in >> value)) throw std::runtime_error("bad PGM header: " + path.string());
    return value;
  };
  const std::size_t width = next_value();
  const std::size_t height = next_value();
  const std::size_t maxval = next_value();
  if (maxval == 0 || maxval > 255)
    throw std::runtime_error("unsupported PGM maxval: " + path.string());
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raster(width * height);
  in.read(reinterpret_cast<char*>(raster.data()),
          static_cast<std::streamsize>(raster.size()));
  if (!in) throw std::runtime_error("truncated PGM raster: " + path.string());
  Tensor out({1, height, width});
  for (std::size_t i = 0; i < raster.size(); ++i)
    out[i] = static_cast<double>(raster[i]) / static_cast<double>(maxval);
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  check_image(image);
  if (image.extent(0) != 1)
    throw std::invalid_argument("write_pgm expects a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path.string());
  const std::size_t h = image.extent(1);
  const std::size_t w = image.extent(2);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raster(h * w);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    raster[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("image write failed: " + path.string());
}

Tensor read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(
      std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image: " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // normalize to 8-bit gray or RGB
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const std::size_t width = png_get_image_width(png, info);
  const std::size_t height = png_get_image_height(png, info);
  const std::size_t channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported PNG channel count: " + path.string());
  }

  std::vector<unsigned char> raster(width * height * channels);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y)
    rows[y] = raster.data() + y * width * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({channels, height, width});
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        out[c * plane + y * width + x] =
            static_cast<double>(raster[(y * width + x) * channels + c]) / 255.0;
      }
    }
  }
  return out;
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open image: " + path.string());
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
  if (magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
  throw std::runtime_error("unsupported image format (want PNG or PGM): " +
                           path.string());
}

}  // namespace scenechar
