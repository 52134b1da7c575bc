#include "isgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace isgan::img {

namespace {

constexpr double kKb = 0.564;  // Cb = 0.5 + kKb * (B - Y)
constexpr double kKr = 0.713;  // Cr = 0.5 + kKr * (R - Y)
constexpr double kWr = 0.299, kWg = 0.587, kWb = 0.114;

ColorMatrix make_bt601() {
  ColorMatrix m{};
  // Y row
  m.forward[0][0] = kWr;
  m.forward[0][1] = kWg;
  m.forward[0][2] = kWb;
  m.forward_offset[0] = 0.0;
  // Cb = 0.5 + kKb*(B - Y)
  m.forward[1][0] = -kKb * kWr;
  m.forward[1][1] = -kKb * kWg;
  m.forward[1][2] = kKb * (1.0 - kWb);
  m.forward_offset[1] = 0.5;
  // Cr = 0.5 + kKr*(R - Y)
  m.forward[2][0] = kKr * (1.0 - kWr);
  m.forward[2][1] = -kKr * kWg;
  m.forward[2][2] = -kKr * kWb;
  m.forward_offset[2] = 0.5;
  // R = Y + (Cr - 0.5)/kKr
  m.inverse[0][0] = 1.0;
  m.inverse[0][1] = 0.0;
  m.inverse[0][2] = 1.0 / kKr;
  // G = Y - (wr/(wg*kr))(Cr-0.5) - (wb/(wg*kb))(Cb-0.5)
  m.inverse[1][0] = 1.0;
  m.inverse[1][1] = -kWb / (kWg * kKb);
  m.inverse[1][2] = -kWr / (kWg * kKr);
  // B = Y + (Cb - 0.5)/kKb
  m.inverse[2][0] = 1.0;
  m.inverse[2][1] = 1.0 / kKb;
  m.inverse[2][2] = 0.0;
  // Inverse offsets fold in the -0.5 chroma shift.
  m.inverse_offset[0] = -0.5 / kKr;
  m.inverse_offset[1] = 0.5 * (kWb / (kWg * kKb) + kWr / (kWg * kKr));
  m.inverse_offset[2] = -0.5 / kKb;
  return m;
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

uint8_t quantize(double x) {
  double q = std::round(x * 255.0);
  return static_cast<uint8_t>(std::min(255.0, std::max(0.0, q)));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

void require_dims(int w, int h) {
  if (w < 1 || h < 1) fail(ErrorCode::InvalidSize, "image dimensions must be >= 1");
}

}  // namespace

const ColorMatrix& ColorMatrix::bt601() {
  static const ColorMatrix m = make_bt601();
  return m;
}

AnyImage load_image(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorCode::FileNotFound, "cannot open " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorCode::UnsupportedFormat, path + ": not a PNG file (lossless 8-bit PNG required)");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<uint8_t> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, path + ": PNG decode error");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);

  if (depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::UnsupportedFormat, path + ": only 8-bit PNG supported");
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS) || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::UnsupportedFormat,
         path + ": only 1-channel gray or 3-channel RGB PNG without alpha supported");
  }

  const int channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  raw.resize(static_cast<size_t>(w) * h * channels);
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = raw.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels == 1) {
    GrayImage g;
    g.width = w;
    g.height = h;
    g.plane.resize(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < g.plane.size(); ++i) g.plane[i] = raw[i] / 255.0;
    return g;
  }
  RasterImage im;
  im.width = w;
  im.height = h;
  im.space = ColorSpace::RGB;
  for (auto& p : im.planes) p.resize(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < im.plane_size(); ++i) {
    im.planes[0][i] = raw[i * 3 + 0] / 255.0;
    im.planes[1][i] = raw[i * 3 + 1] / 255.0;
    im.planes[2][i] = raw[i * 3 + 2] / 255.0;
  }
  return im;
}

namespace {

void write_png(const std::string& path, int w, int h, int channels, const std::vector<uint8_t>& raw) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::Io, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, path + ": PNG encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(raw.data() + static_cast<size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void save_image(const RasterImage& img, const std::string& path) {
  // Stego transport must be lossless; chroma is stored untouched, so convert
  // YCbCr back to RGB only when asked by the caller. On-disk format is RGB.
  const RasterImage* src = &img;
  RasterImage converted;
  if (img.space == ColorSpace::YCbCr) {
    converted = ycbcr_to_rgb(img);
    src = &converted;
  }
  std::vector<uint8_t> raw(src->plane_size() * 3);
  for (size_t i = 0; i < src->plane_size(); ++i) {
    raw[i * 3 + 0] = quantize(src->planes[0][i]);
    raw[i * 3 + 1] = quantize(src->planes[1][i]);
    raw[i * 3 + 2] = quantize(src->planes[2][i]);
  }
  write_png(path, src->width, src->height, 3, raw);
}

void save_image(const GrayImage& img, const std::string& path) {
  std::vector<uint8_t> raw(img.plane_size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = quantize(img.plane[i]);
  write_png(path, img.width, img.height, 1, raw);
}

void save_image(const AnyImage& img, const std::string& path) {
  std::visit([&](const auto& im) { save_image(im, path); }, img);
}

RasterImage rgb_to_ycbcr(const RasterImage& img) {
  if (img.space != ColorSpace::RGB) fail(ErrorCode::WrongColorSpace, "rgb_to_ycbcr: input must be RGB");
  const auto& m = ColorMatrix::bt601();
  RasterImage out;
  out.width = img.width;
  out.height = img.height;
  out.space = ColorSpace::YCbCr;
  for (auto& p : out.planes) p.resize(img.plane_size());
  for (size_t i = 0; i < img.plane_size(); ++i) {
    double r = img.planes[0][i], g = img.planes[1][i], b = img.planes[2][i];
    for (int ch = 0; ch < 3; ++ch) {
      double v = m.forward[ch][0] * r + m.forward[ch][1] * g + m.forward[ch][2] * b + m.forward_offset[ch];
      out.planes[ch][i] = clamp01(v);
    }
  }
  return out;
}

RasterImage ycbcr_to_rgb(const RasterImage& img) {
  if (img.space != ColorSpace::YCbCr) fail(ErrorCode::WrongColorSpace, "ycbcr_to_rgb: input must be YCbCr");
  const auto& m = ColorMatrix::bt601();
  RasterImage out;
  out.width = img.width;
  out.height = img.height;
  out.space = ColorSpace::RGB;
  for (auto& p : out.planes) p.resize(img.plane_size());
  for (size_t i = 0; i < img.plane_size(); ++i) {
    double y = img.planes[0][i], cb = img.planes[1][i], cr = img.planes[2][i];
    for (int ch = 0; ch < 3; ++ch) {
      double v = m.inverse[ch][0] * y + m.inverse[ch][1] * cb + m.inverse[ch][2] * cr + m.inverse_offset[ch];
      out.planes[ch][i] = clamp01(v);
    }
  }
  return out;
}

RasterImage replace_luma(const RasterImage& img, const GrayImage& y) {
  if (img.space != ColorSpace::YCbCr) fail(ErrorCode::WrongColorSpace, "replace_luma: input must be YCbCr");
  if (img.width != y.width || img.height != y.height)
    fail(ErrorCode::DimensionMismatch, "replace_luma: dimensions differ");
  RasterImage out = img;
  out.planes[0] = y.plane;
  return out;
}

GrayImage extract_luma(const RasterImage& img) {
  if (img.space != ColorSpace::YCbCr) fail(ErrorCode::WrongColorSpace, "extract_luma: input must be YCbCr");
  GrayImage g;
  g.width = img.width;
  g.height = img.height;
  g.plane = img.planes[0];
  return g;
}

namespace {

// Corner-aligned bilinear resampling of one plane.
std::vector<double> resize_plane(const std::vector<double>& src, int sw, int sh, int dw, int dh) {
  std::vector<double> dst(static_cast<size_t>(dw) * dh);
  if (sw == dw && sh == dh) {
    dst = src;
    return dst;
  }
  auto coord = [](int i, int d, int s) {
    return d > 1 ? static_cast<double>(i) * (s - 1) / (d - 1) : 0.0;
  };
  for (int y = 0; y < dh; ++y) {
    double fy = coord(y, dh, sh);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, sh - 1);
    double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = coord(x, dw, sw);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, sw - 1);
      double wx = fx - x0;
      double v00 = src[static_cast<size_t>(y0) * sw + x0];
      double v01 = src[static_cast<size_t>(y0) * sw + x1];
      double v10 = src[static_cast<size_t>(y1) * sw + x0];
      double v11 = src[static_cast<size_t>(y1) * sw + x1];
      dst[static_cast<size_t>(y) * dw + x] =
          (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
    }
  }
  return dst;
}

}  // namespace

RasterImage resize_bilinear(const RasterImage& img, int new_w, int new_h) {
  require_dims(new_w, new_h);
  RasterImage out;
  out.width = new_w;
  out.height = new_h;
  out.space = img.space;
  for (int c = 0; c < 3; ++c) out.planes[c] = resize_plane(img.planes[c], img.width, img.height, new_w, new_h);
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h) {
  require_dims(new_w, new_h);
  GrayImage out;
  out.width = new_w;
  out.height = new_h;
  out.plane = resize_plane(img.plane, img.width, img.height, new_w, new_h);
  return out;
}

GrayImage luma_of_rgb(const RasterImage& img) {
  if (img.space != ColorSpace::RGB) fail(ErrorCode::WrongColorSpace, "luma_of_rgb: input must be RGB");
  GrayImage g;
  g.width = img.width;
  g.height = img.height;
  g.plane.resize(img.plane_size());
  for (size_t i = 0; i < g.plane.size(); ++i)
    g.plane[i] = clamp01(kWr * img.planes[0][i] + kWg * img.planes[1][i] + kWb * img.planes[2][i]);
  return g;
}

RasterImage gray_to_rgb(const GrayImage& img) {
  RasterImage out;
  out.width = img.width;
  out.height = img.height;
  out.space = ColorSpace::RGB;
  for (auto& p : out.planes) p = img.plane;
  return out;
}

}  // namespace isgan::img
