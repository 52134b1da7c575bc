#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "isgan/autodiff.hpp"

namespace isgan::metrics {

/// SSIM/MS-SSIM constants. C1 = K1^2, C2 = K2^2, C3 = C2/2 on unit-range
/// images; exponents l, m, n default to 1 (the reference-implementation form).
struct SsimConfig {
  int window_size = 11;
  double gaussian_sigma = 1.5;
  double K1 = 0.01;
  double K2 = 0.03;
  double exp_l = 1.0, exp_m = 1.0, exp_n = 1.0;
  std::vector<double> msssim_scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

  void validate() const {
    if (window_size < 3 || window_size % 2 == 0)
      fail(ErrorCode::BadArgument, "SsimConfig: window_size must be odd and >= 3");
    if (K1 <= 0 || K2 <= 0) fail(ErrorCode::BadArgument, "SsimConfig: K1, K2 must be > 0");
    double s = 0;
    for (double w : msssim_scale_weights) {
      if (w <= 0) fail(ErrorCode::BadArgument, "SsimConfig: scale weights must be > 0");
      s += w;
    }
    // The canonical five weights sum to 1.0001, so allow a small slack.
    if (std::abs(s - 1.0) > 1e-3) fail(ErrorCode::BadArgument, "SsimConfig: scale weights must sum to ~1");
  }

  int max_scales_for(int min_dim) const {
    int s = 0;
    long need = window_size;
    while (need <= min_dim && s < static_cast<int>(msssim_scale_weights.size())) {
      ++s;
      need *= 2;
    }
    return s;
  }

  /// Copy with the scale count shrunk to fit min(h,w) and weights renormalized.
  SsimConfig for_size(int h, int w) const {
    SsimConfig c = *this;
    int s = max_scales_for(std::min(h, w));
    if (s < 1) fail(ErrorCode::ImageTooSmall, "image smaller than the SSIM window");
    c.msssim_scale_weights.assign(msssim_scale_weights.begin(), msssim_scale_weights.begin() + s);
    double sum = 0;
    for (double v : c.msssim_scale_weights) sum += v;
    for (double& v : c.msssim_scale_weights) v /= sum;
    return c;
  }
};

template <class T>
std::vector<T> gaussian_window(int size, double sigma) {
  std::vector<T> k(static_cast<size_t>(size) * size);
  double c = (size - 1) / 2.0;
  double sum = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double d2 = (y - c) * (y - c) + (x - c) * (x - c);
      double v = std::exp(-d2 / (2.0 * sigma * sigma));
      k[static_cast<size_t>(y) * size + x] = static_cast<T>(v);
      sum += v;
    }
  for (auto& v : k) v = static_cast<T>(v / sum);
  return k;
}

// ---------------------------------------------------------------------------
// Differentiable metric graphs
// ---------------------------------------------------------------------------

template <class T>
ad::Ref<T> mse_var(const ad::Ref<T>& a, const ad::Ref<T>& b) {
  require_same_shape(a->value, b->value, "mse");
  auto d = ad::sub(a, b);
  return ad::mean(ad::mul(d, d));
}

namespace detail {

template <class T>
struct SsimMaps {
  ad::Ref<T> luminance;          // (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
  ad::Ref<T> contrast_structure;  // (2 sigma_xy + C2) / (sigma_x^2 + sigma_y^2 + C2)
};

template <class T>
SsimMaps<T> ssim_maps(const ad::Ref<T>& x, const ad::Ref<T>& y, const SsimConfig& cfg) {
  if (x->value.channels() != 1 || y->value.channels() != 1)
    fail(ErrorCode::ShapeMismatch, "ssim: inputs must be single-channel");
  require_same_shape(x->value, y->value, "ssim");
  if (x->value.height() < cfg.window_size || x->value.width() < cfg.window_size)
    fail(ErrorCode::ImageTooSmall, "ssim: image smaller than window");
  const auto win = gaussian_window<T>(cfg.window_size, cfg.gaussian_sigma);
  const int k = cfg.window_size;
  const T c1 = static_cast<T>(cfg.K1 * cfg.K1);
  const T c2 = static_cast<T>(cfg.K2 * cfg.K2);
  auto mu_x = ad::window_filter(x, win, k, k);
  auto mu_y = ad::window_filter(y, win, k, k);
  auto mu_xx = ad::mul(mu_x, mu_x);
  auto mu_yy = ad::mul(mu_y, mu_y);
  auto mu_xy = ad::mul(mu_x, mu_y);
  auto var_x = ad::sub(ad::window_filter(ad::mul(x, x), win, k, k), mu_xx);
  auto var_y = ad::sub(ad::window_filter(ad::mul(y, y), win, k, k), mu_yy);
  auto cov = ad::sub(ad::window_filter(ad::mul(x, y), win, k, k), mu_xy);
  SsimMaps<T> m;
  m.luminance = ad::div(ad::affine(mu_xy, T(2), c1), ad::affine(ad::add(mu_xx, mu_yy), T(1), c1));
  m.contrast_structure = ad::div(ad::affine(cov, T(2), c2), ad::affine(ad::add(var_x, var_y), T(1), c2));
  return m;
}

}  // namespace detail

/// Mean SSIM over all window positions (and batch items). Requires the
/// reduced two-term form, i.e. exponents l = m = n = 1.
template <class T>
ad::Ref<T> ssim_var(const ad::Ref<T>& x, const ad::Ref<T>& y, const SsimConfig& cfg) {
  cfg.validate();
  if (cfg.exp_l != 1.0 || cfg.exp_m != 1.0 || cfg.exp_n != 1.0)
    fail(ErrorCode::BadArgument, "ssim_var: only l=m=n=1 is supported on the differentiable path");
  auto m = detail::ssim_maps(x, y, cfg);
  return ad::mean(ad::mul(m.luminance, m.contrast_structure));
}

/// Multi-scale SSIM: contrast*structure means at each dyadic scale, luminance
/// at the coarsest, combined with the scale weights as exponents. The scale
/// count is taken from cfg.msssim_scale_weights; use SsimConfig::for_size to
/// shrink it explicitly for small images.
template <class T>
ad::Ref<T> ms_ssim_var(const ad::Ref<T>& x, const ad::Ref<T>& y, const SsimConfig& cfg) {
  cfg.validate();
  const int scales = static_cast<int>(cfg.msssim_scale_weights.size());
  const int min_dim = std::min(x->value.height(), x->value.width());
  if (min_dim < cfg.window_size * (1 << (scales - 1)))
    fail(ErrorCode::ImageTooSmall, "ms_ssim: reduce the scale count explicitly for this image size");
  // Guard against exactly-zero bases before fractional powers.
  const T floor_val = static_cast<T>(1e-6);
  ad::Ref<T> result;
  ad::Ref<T> cx = x, cy = y;
  for (int j = 0; j < scales; ++j) {
    auto maps = detail::ssim_maps(cx, cy, cfg);
    T w = static_cast<T>(cfg.msssim_scale_weights[j]);
    auto cs = ad::pow_const(ad::clamp_min(ad::mean(maps.contrast_structure), floor_val), w);
    result = result ? ad::mul(result, cs) : cs;
    if (j == scales - 1) {
      auto lum = ad::pow_const(ad::clamp_min(ad::mean(maps.luminance), floor_val), w);
      result = ad::mul(result, lum);
    } else {
      cx = ad::avg_pool(cx, 2, 2, 0);
      cy = ad::avg_pool(cy, 2, 2, 0);
    }
  }
  return result;
}

/// Loss weights of the mixed loss: alpha balances SSIM vs MS-SSIM, beta
/// weights the MSE term, gamma weights the secret-reconstruction loss.
struct LossWeights {
  double alpha = 0.5;
  double beta = 0.3;
  double gamma = 0.85;

  void validate() const {
    if (alpha < 0 || alpha > 1) fail(ErrorCode::BadArgument, "LossWeights: alpha must be in [0,1]");
    if (beta < 0 || gamma < 0) fail(ErrorCode::BadArgument, "LossWeights: beta, gamma must be >= 0");
  }
};

/// alpha*(1-SSIM) + (1-alpha)*(1-MS-SSIM) + beta*MSE
template <class T>
ad::Ref<T> image_loss_var(const ad::Ref<T>& a, const ad::Ref<T>& b, const LossWeights& w,
                          const SsimConfig& cfg) {
  w.validate();
  auto one_minus = [](const ad::Ref<T>& v) { return ad::affine(v, T(-1), T(1)); };
  auto loss = ad::scale(one_minus(ssim_var(a, b, cfg)), static_cast<T>(w.alpha));
  loss = ad::add(loss, ad::scale(one_minus(ms_ssim_var(a, b, cfg)), static_cast<T>(1.0 - w.alpha)));
  return ad::add(loss, ad::scale(mse_var(a, b), static_cast<T>(w.beta)));
}

/// image_loss(c, c') + gamma * image_loss(s, s'). The cover term reaches only
/// parameters on the c' path; the secret term reaches everything on the s'
/// path (gradient routing falls out of the graph structure).
template <class T>
ad::Ref<T> total_loss_var(const ad::Ref<T>& c, const ad::Ref<T>& c2, const ad::Ref<T>& s,
                          const ad::Ref<T>& s2, const LossWeights& w, const SsimConfig& cfg) {
  auto lc = image_loss_var(c, c2, w, cfg);
  auto ls = image_loss_var(s, s2, w, cfg);
  return ad::add(lc, ad::scale(ls, static_cast<T>(w.gamma)));
}

// ---------------------------------------------------------------------------
// Plain (non-differentiable) entry points
// ---------------------------------------------------------------------------

template <class T>
T mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) fail(ErrorCode::EmptyInput, "mse: empty input");
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(a.size()));
}

/// PSNR in dB with MAX = 1; +infinity when MSE is zero.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  double m = static_cast<double>(mse(a, b));
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

template <class T>
T ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimConfig& cfg = {}) {
  ad::NoGrad ng;
  return ssim_var(ad::constant(a), ad::constant(b), cfg)->value.v[0];
}

template <class T>
T ms_ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimConfig& cfg = {}) {
  ad::NoGrad ng;
  return ms_ssim_var(ad::constant(a), ad::constant(b), cfg)->value.v[0];
}

template <class T>
T image_loss(const Tensor<T>& a, const Tensor<T>& b, const LossWeights& w, const SsimConfig& cfg = {}) {
  ad::NoGrad ng;
  return image_loss_var(ad::constant(a), ad::constant(b), w, cfg)->value.v[0];
}

template <class T>
T total_loss(const Tensor<T>& c, const Tensor<T>& c2, const Tensor<T>& s, const Tensor<T>& s2,
             const LossWeights& w, const SsimConfig& cfg = {}) {
  ad::NoGrad ng;
  return total_loss_var(ad::constant(c), ad::constant(c2), ad::constant(s), ad::constant(s2), w, cfg)
      ->value.v[0];
}

// ---------------------------------------------------------------------------
// Empirical divergences (diagnostic only)
// ---------------------------------------------------------------------------

enum class DivergenceKind { KL, JS };

struct DivergenceEstimate {
  DivergenceKind kind;
  double value = 0;  // nats
  int bin_count = 0;
};

/// Histogram divergence over the common sample range with add-one smoothing.
DivergenceEstimate divergence(const std::vector<double>& p_samples, const std::vector<double>& q_samples,
                              DivergenceKind kind, int bins = 256);

}  // namespace isgan::metrics
