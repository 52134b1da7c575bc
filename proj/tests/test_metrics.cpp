#include <doctest.h>

#include <cmath>

#include "isgan/metrics.hpp"
#include "isgan/rng.hpp"
#include "ssim_reference.hpp"
#include "testutil.hpp"

using namespace isgan;

namespace {

Tensor<double> to_tensor(const std::vector<double>& v, int w, int h) {
  Tensor<double> t(1, 1, h, w);
  t.v = v;
  return t;
}

/// Correlated image pair, the regime SSIM/MS-SSIM are used in here.
void make_pair(uint64_t seed, int w, int h, std::vector<double>* x, std::vector<double>* y) {
  Rng rng(seed);
  *x = testutil::synth_field(rng, w, h);
  auto noise = testutil::synth_field(rng, w, h);
  y->resize(x->size());
  for (size_t i = 0; i < x->size(); ++i) (*y)[i] = 0.8 * (*x)[i] + 0.2 * noise[i];
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("ssim and ms-ssim match the independent reference on 50 pairs") {
  const auto cfg = metrics::SsimConfig().for_size(64, 64);
  REQUIRE(cfg.msssim_scale_weights.size() == 3);
  double worst_ssim = 0, worst_ms = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x, y;
    make_pair(100 + i, 64, 64, &x, &y);
    auto tx = to_tensor(x, 64, 64), ty = to_tensor(y, 64, 64);
    double d_ssim = std::abs(metrics::ssim(tx, ty) - ssim_ref::ssim(x, y, 64, 64));
    double d_ms =
        std::abs(metrics::ms_ssim(tx, ty, cfg) - ssim_ref::ms_ssim(x, y, 64, 64, cfg.msssim_scale_weights));
    REQUIRE(std::isfinite(d_ssim));  // a NaN would otherwise vanish in std::max
    REQUIRE(std::isfinite(d_ms));
    worst_ssim = std::max(worst_ssim, d_ssim);
    worst_ms = std::max(worst_ms, d_ms);
  }
  CHECK(worst_ssim <= 1e-6);
  CHECK(worst_ms <= 1e-5);
}

TEST_CASE("ssim of an image with itself is exactly 1") {
  std::vector<double> x, y;
  make_pair(7, 32, 32, &x, &y);
  auto t = to_tensor(x, 32, 32);
  CHECK(metrics::ssim(t, t) == 1.0);
  CHECK(metrics::ms_ssim(t, t, metrics::SsimConfig().for_size(32, 32)) == 1.0);
}

TEST_CASE("ssim is symmetric and in (0, 1] for correlated pairs") {
  std::vector<double> x, y;
  make_pair(8, 48, 48, &x, &y);
  auto tx = to_tensor(x, 48, 48), ty = to_tensor(y, 48, 48);
  CHECK(metrics::ssim(tx, ty) == doctest::Approx(metrics::ssim(ty, tx)).epsilon(1e-12));
  CHECK(metrics::ssim(tx, ty) > 0.0);
  CHECK(metrics::ssim(tx, ty) < 1.0);
}

TEST_CASE("mse and psnr") {
  Tensor<double> a(1, 1, 4, 4), b(1, 1, 4, 4);
  for (size_t i = 0; i < a.size(); ++i) {
    a.v[i] = 0.5;
    b.v[i] = 0.6;
  }
  CHECK(metrics::mse(a, b) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(std::isinf(metrics::psnr(a, a)));
  Tensor<double> empty;
  CHECK(code_of([&] { metrics::mse(empty, empty); }) == ErrorCode::EmptyInput);
}

TEST_CASE("image_loss composes ssim, ms-ssim and mse as weighted") {
  std::vector<double> x, y;
  make_pair(9, 32, 32, &x, &y);
  auto tx = to_tensor(x, 32, 32), ty = to_tensor(y, 32, 32);
  const auto cfg = metrics::SsimConfig().for_size(32, 32);
  metrics::LossWeights w;
  double expect = w.alpha * (1 - metrics::ssim(tx, ty, cfg)) +
                  (1 - w.alpha) * (1 - metrics::ms_ssim(tx, ty, cfg)) + w.beta * metrics::mse(tx, ty);
  CHECK(metrics::image_loss(tx, ty, w, cfg) == doctest::Approx(expect).epsilon(1e-12));
  std::vector<double> s, s2;
  make_pair(10, 32, 32, &s, &s2);
  auto ts = to_tensor(s, 32, 32), ts2 = to_tensor(s2, 32, 32);
  double total = metrics::image_loss(tx, ty, w, cfg) + w.gamma * metrics::image_loss(ts, ts2, w, cfg);
  CHECK(metrics::total_loss(tx, ty, ts, ts2, w, cfg) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("identical inputs give zero image loss") {
  std::vector<double> x, y;
  make_pair(11, 32, 32, &x, &y);
  auto t = to_tensor(x, 32, 32);
  CHECK(metrics::image_loss(t, t, {}, metrics::SsimConfig().for_size(32, 32)) == 0.0);
}

TEST_CASE("ms-ssim refuses images smaller than its scale pyramid") {
  std::vector<double> x, y;
  make_pair(12, 64, 64, &x, &y);
  auto tx = to_tensor(x, 64, 64), ty = to_tensor(y, 64, 64);
  // 5 scales need min dim >= 11 * 2^4 = 176
  CHECK(code_of([&] { metrics::ms_ssim(tx, ty); }) == ErrorCode::ImageTooSmall);
}

TEST_CASE("for_size shrinks the scale pyramid and renormalizes weights") {
  metrics::SsimConfig base;
  auto c = base.for_size(64, 64);
  REQUIRE(c.msssim_scale_weights.size() == 3);  // 11, 22, 44 fit; 88 does not
  double sum = 0;
  for (double v : c.msssim_scale_weights) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.msssim_scale_weights[0] / c.msssim_scale_weights[1] ==
        doctest::Approx(base.msssim_scale_weights[0] / base.msssim_scale_weights[1]).epsilon(1e-12));
  CHECK(base.for_size(256, 256).msssim_scale_weights.size() == 5);
  CHECK(code_of([&] { base.for_size(8, 8); }) == ErrorCode::ImageTooSmall);
}

TEST_CASE("config validation") {
  metrics::SsimConfig c;
  c.window_size = 4;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::BadArgument);
  metrics::LossWeights w;
  w.alpha = 1.5;
  CHECK(code_of([&] { w.validate(); }) == ErrorCode::BadArgument);
}

TEST_CASE("gaussian window is normalized and symmetric") {
  auto win = metrics::gaussian_window<double>(11, 1.5);
  double sum = 0;
  for (double v : win) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(win[0] == doctest::Approx(win[120]).epsilon(1e-12));  // corners equal
  CHECK(win[60] > win[0]);                                    // center dominates
}

TEST_CASE("divergences") {
  std::vector<double> p(512, 0.25), q(512, 0.75);
  SUBCASE("identical sample sets give zero") {
    auto kl = metrics::divergence(p, p, metrics::DivergenceKind::KL);
    auto js = metrics::divergence(p, p, metrics::DivergenceKind::JS);
    CHECK(kl.value == 0.0);
    CHECK(js.value == 0.0);
  }
  SUBCASE("two-bin point masses match the closed form") {
    // smoothed histograms: p = (513, 1)/514, q = (1, 513)/514
    auto kl = metrics::divergence(p, q, metrics::DivergenceKind::KL, 2);
    CHECK(kl.value == doctest::Approx(512.0 / 514.0 * std::log(513.0)).epsilon(1e-12));
    CHECK(kl.bin_count == 2);
  }
  SUBCASE("js is symmetric and bounded by ln 2") {
    auto a = metrics::divergence(p, q, metrics::DivergenceKind::JS);
    auto b = metrics::divergence(q, p, metrics::DivergenceKind::JS);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    CHECK(a.value > 0.0);
    CHECK(a.value <= std::log(2.0) + 1e-12);
  }
  SUBCASE("divergence grows with distribution shift") {
    Rng rng(13);
    std::vector<double> base, near, far;
    for (int i = 0; i < 4000; ++i) {
      double v = rng.uniform();
      base.push_back(v);
      near.push_back(std::min(1.0, v + 0.05));
      far.push_back(std::min(1.0, v + 0.4));
    }
    auto dn = metrics::divergence(base, near, metrics::DivergenceKind::JS, 64);
    auto df = metrics::divergence(base, far, metrics::DivergenceKind::JS, 64);
    CHECK(dn.value < df.value);
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { metrics::divergence({}, p, metrics::DivergenceKind::KL); }) ==
          ErrorCode::EmptyInput);
    CHECK(code_of([&] { metrics::divergence(p, q, metrics::DivergenceKind::KL, 1); }) ==
          ErrorCode::BadArgument);
  }
}

}  // TEST_SUITE
