#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "isgan/error.hpp"

namespace isgan::img {

enum class ColorSpace { RGB, YCbCr };

/// Three-plane image, unit-float intensities in [0,1], channel-major planes.
/// YCbCr planes are ordered (Y, Cb, Cr).
struct RasterImage {
  int width = 0;
  int height = 0;
  std::array<std::vector<double>, 3> planes;
  ColorSpace space = ColorSpace::RGB;

  size_t plane_size() const { return static_cast<size_t>(width) * height; }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> plane;

  size_t plane_size() const { return static_cast<size_t>(width) * height; }
};

using AnyImage = std::variant<RasterImage, GrayImage>;

/// RGB<->YCbCr coefficients; forward/inverse are exact algebraic inverses.
struct ColorMatrix {
  double forward[3][3];
  double forward_offset[3];
  double inverse[3][3];
  double inverse_offset[3];

  /// Full-range BT.601 (JPEG convention) on unit-float values.
  static const ColorMatrix& bt601();
};

AnyImage load_image(const std::string& path);
void save_image(const RasterImage& img, const std::string& path);
void save_image(const GrayImage& img, const std::string& path);
void save_image(const AnyImage& img, const std::string& path);

RasterImage rgb_to_ycbcr(const RasterImage& img);
RasterImage ycbcr_to_rgb(const RasterImage& img);

/// Returns a YCbCr image with Y replaced and Cb/Cr bit-identical to `img`.
RasterImage replace_luma(const RasterImage& img, const GrayImage& y);
GrayImage extract_luma(const RasterImage& img);

RasterImage resize_bilinear(const RasterImage& img, int new_w, int new_h);
GrayImage resize_bilinear(const GrayImage& img, int new_w, int new_h);

/// BT.601 luma of an RGB image (used to derive gray secrets).
GrayImage luma_of_rgb(const RasterImage& img);

/// Replicates a gray plane into an RGB image.
RasterImage gray_to_rgb(const GrayImage& img);

}  // namespace isgan::img
