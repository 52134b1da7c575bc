#pragma once

// Reference SSIM / MS-SSIM, written directly from the published definitions
// with the three comparison terms kept separate:
//   l = (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
//   c = (2 sd_x sd_y + C2) / (sd_x^2 + sd_y^2 + C2)
//   s = (cov_xy + C3) / (sd_x sd_y + C3),  C3 = C2 / 2
//   SSIM = mean over windows of l^a * c^b * s^g
// Deliberately naive (per-window loops, no shared code with the library) so
// it can serve as an independent oracle in tests.

#include <cmath>
#include <vector>

namespace ssim_ref {

struct Params {
  int window = 11;
  double sigma = 1.5;
  double K1 = 0.01, K2 = 0.03;
  double exp_l = 1.0, exp_c = 1.0, exp_s = 1.0;
};

inline std::vector<double> window_weights(int size, double sigma) {
  std::vector<double> k(static_cast<size_t>(size) * size);
  double c = (size - 1) / 2.0, sum = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
      k[static_cast<size_t>(y) * size + x] = v;
      sum += v;
    }
  for (auto& v : k) v /= sum;
  return k;
}

inline double ssim(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                   const Params& p = {}) {
  const auto win = window_weights(p.window, p.sigma);
  const double c1 = p.K1 * p.K1, c2 = p.K2 * p.K2, c3 = c2 / 2;
  double total = 0;
  long count = 0;
  for (int oy = 0; oy + p.window <= h; ++oy)
    for (int ox = 0; ox + p.window <= w; ++ox) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int ky = 0; ky < p.window; ++ky)
        for (int kx = 0; kx < p.window; ++kx) {
          double wt = win[static_cast<size_t>(ky) * p.window + kx];
          double xv = x[static_cast<size_t>(oy + ky) * w + (ox + kx)];
          double yv = y[static_cast<size_t>(oy + ky) * w + (ox + kx)];
          mx += wt * xv;
          my += wt * yv;
          mxx += wt * xv * xv;
          myy += wt * yv * yv;
          mxy += wt * xv * yv;
        }
      double sdx = std::sqrt(std::max(0.0, mxx - mx * mx));
      double sdy = std::sqrt(std::max(0.0, myy - my * my));
      double cov = mxy - mx * my;
      double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
      double c = (2 * sdx * sdy + c2) / (sdx * sdx + sdy * sdy + c2);
      double s = (cov + c3) / (sdx * sdy + c3);
      total += std::pow(l, p.exp_l) * std::pow(c, p.exp_c) * std::pow(s, p.exp_s);
      ++count;
    }
  return total / count;
}

/// Mean contrast*structure term and mean luminance term over all windows.
inline void cs_and_l(const std::vector<double>& x, const std::vector<double>& y, int w, int h,
                     const Params& p, double* cs_out, double* l_out) {
  const auto win = window_weights(p.window, p.sigma);
  const double c1 = p.K1 * p.K1, c2 = p.K2 * p.K2, c3 = c2 / 2;
  double cs_total = 0, l_total = 0;
  long count = 0;
  for (int oy = 0; oy + p.window <= h; ++oy)
    for (int ox = 0; ox + p.window <= w; ++ox) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int ky = 0; ky < p.window; ++ky)
        for (int kx = 0; kx < p.window; ++kx) {
          double wt = win[static_cast<size_t>(ky) * p.window + kx];
          double xv = x[static_cast<size_t>(oy + ky) * w + (ox + kx)];
          double yv = y[static_cast<size_t>(oy + ky) * w + (ox + kx)];
          mx += wt * xv;
          my += wt * yv;
          mxx += wt * xv * xv;
          myy += wt * yv * yv;
          mxy += wt * xv * yv;
        }
      double sdx = std::sqrt(std::max(0.0, mxx - mx * mx));
      double sdy = std::sqrt(std::max(0.0, myy - my * my));
      double cov = mxy - mx * my;
      double c = (2 * sdx * sdy + c2) / (sdx * sdx + sdy * sdy + c2);
      double s = (cov + c3) / (sdx * sdy + c3);
      cs_total += c * s;
      l_total += (2 * mx * my + c1) / (mx * mx + my * my + c1);
      ++count;
    }
  *cs_out = cs_total / count;
  *l_out = l_total / count;
}

inline void downsample2(std::vector<double>& img, int* w, int* h) {
  int nw = *w / 2, nh = *h / 2;
  std::vector<double> out(static_cast<size_t>(nw) * nh);
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x)
      out[static_cast<size_t>(y) * nw + x] =
          (img[static_cast<size_t>(2 * y) * *w + 2 * x] + img[static_cast<size_t>(2 * y) * *w + 2 * x + 1] +
           img[static_cast<size_t>(2 * y + 1) * *w + 2 * x] +
           img[static_cast<size_t>(2 * y + 1) * *w + 2 * x + 1]) /
          4.0;
  img = std::move(out);
  *w = nw;
  *h = nh;
}

/// MS-SSIM with the usual weights as exponents: contrast*structure at every
/// scale, luminance only at the coarsest.
inline double ms_ssim(std::vector<double> x, std::vector<double> y, int w, int h,
                      const std::vector<double>& weights, const Params& p = {}) {
  double result = 1.0;
  for (size_t j = 0; j < weights.size(); ++j) {
    double cs = 0, l = 0;
    cs_and_l(x, y, w, h, p, &cs, &l);
    result *= std::pow(cs, weights[j]);
    if (j + 1 == weights.size())
      result *= std::pow(l, weights[j]);
    else {
      int wy = w, hy = h;  // downsample each image with its own (equal) dims
      downsample2(x, &w, &h);
      downsample2(y, &wy, &hy);
    }
  }
  return result;
}

}  // namespace ssim_ref
