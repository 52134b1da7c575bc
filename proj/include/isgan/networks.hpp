#pragma once

#include <utility>

#include "isgan/image.hpp"
#include "isgan/layers.hpp"

namespace isgan::net {

enum class NetKind { Encoder, Decoder, Steganalyzer };

inline const char* kind_name(NetKind k) {
  switch (k) {
    case NetKind::Encoder: return "encoder";
    case NetKind::Decoder: return "decoder";
    case NetKind::Steganalyzer: return "steganalyzer";
  }
  return "?";
}

template <class T>
struct Network {
  NetKind kind;
  nn::ParameterStore<T> store;
  nn::Sequential<T> stack;

  ad::Ref<T> forward(const ad::Ref<T>& x, bool train) { return stack.forward(x, train); }
};

/// Encoder: ConvBlock1(2->16), inception-residual ladder
/// 16->32->64->128->256->128->64->32, ConvBlock1(32->16), 1x1 Conv + Tanh,
/// then (x+1)/2 so the stego Y plane is a valid intensity.
template <class T>
std::unique_ptr<Network<T>> build_encoder(uint64_t seed) {
  auto net = std::make_unique<Network<T>>();
  net->kind = NetKind::Encoder;
  Rng rng(seed);
  auto& s = net->stack;
  auto& st = net->store;
  s.push(nn::conv_bn_lrelu<T>("enc.l1", 2, 16, 3, 1, 1, rng, st));
  const int ladder[] = {16, 32, 64, 128, 256, 128, 64, 32};
  for (int i = 0; i + 1 < 8; ++i)
    s.template emplace<nn::InceptionResidual<T>>("enc.inc" + std::to_string(i + 1), ladder[i], ladder[i + 1],
                                                 rng, st);
  s.push(nn::conv_bn_lrelu<T>("enc.l9", 32, 16, 3, 1, 1, rng, st));
  s.template emplace<nn::Conv2d<T>>("enc.out", 16, 1, 1, 1, 0, rng, st);
  s.template emplace<nn::Activation<T>>(nn::Act::Tanh);
  s.template emplace<nn::AffineRescale<T>>(T(0.5), T(0.5));
  return net;
}

/// Decoder: five 3x3 Conv+BN+LeakyReLU blocks 1->32->64->128->64->32,
/// then 1x1 Conv + Sigmoid.
template <class T>
std::unique_ptr<Network<T>> build_decoder(uint64_t seed) {
  auto net = std::make_unique<Network<T>>();
  net->kind = NetKind::Decoder;
  Rng rng(seed);
  auto& s = net->stack;
  auto& st = net->store;
  const int widths[] = {1, 32, 64, 128, 64, 32};
  for (int i = 0; i < 5; ++i)
    s.push(nn::conv_bn_lrelu<T>("dec.l" + std::to_string(i + 1), widths[i], widths[i + 1], 3, 1, 1, rng, st));
  s.template emplace<nn::Conv2d<T>>("dec.out", 32, 1, 1, 1, 0, rng, st);
  s.template emplace<nn::Activation<T>>(nn::Act::Sigmoid);
  return net;
}

/// Steganalyzer: two 3x3 Conv+BN+LeakyReLU+AvgPool blocks, two stride-2
/// 1x1 Conv+BN blocks, one stride-2 1x1 Conv+BN+LeakyReLU block, SPP(1,2,4),
/// FC 2688->128->2. The 1x1 blocks use stride 2 to realize the tables'
/// spatial halving.
template <class T>
std::unique_ptr<Network<T>> build_steganalyzer(uint64_t seed) {
  auto net = std::make_unique<Network<T>>();
  net->kind = NetKind::Steganalyzer;
  Rng rng(seed);
  auto& s = net->stack;
  auto& st = net->store;
  auto cb1 = [&](const std::string& name, int cin, int cout) {
    auto block = nn::conv_bn_lrelu<T>(name, cin, cout, 3, 1, 1, rng, st);
    block->template emplace<nn::AvgPool<T>>(2, 2);
    s.push(std::move(block));
  };
  auto cb2 = [&](const std::string& name, int cin, int cout, bool act) {
    auto block = std::make_unique<nn::Sequential<T>>();
    block->template emplace<nn::Conv2d<T>>(name + ".conv", cin, cout, 1, 2, 0, rng, st);
    block->template emplace<nn::BatchNorm<T>>(name + ".bn", cout, st);
    if (act) block->template emplace<nn::Activation<T>>(nn::Act::LeakyReLU);
    s.push(std::move(block));
  };
  cb1("steg.l1", 3, 8);
  cb1("steg.l2", 8, 16);
  cb2("steg.l3", 16, 32, false);
  cb2("steg.l4", 32, 64, false);
  cb2("steg.l5", 64, 128, true);
  s.template emplace<nn::Spp<T>>(std::vector<int>{1, 2, 4});
  {
    auto fc = std::make_unique<nn::Sequential<T>>();
    fc->template emplace<nn::Linear<T>>("steg.fc1", 2688, 128, rng, st);
    fc->template emplace<nn::Activation<T>>(nn::Act::LeakyReLU);
    s.push(std::move(fc));
  }
  s.template emplace<nn::Linear<T>>("steg.fc2", 128, 2, rng, st);
  return net;
}

// ---------------------------------------------------------------------------
// Image <-> tensor bridge
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> gray_to_tensor(const img::GrayImage& g) {
  Tensor<T> t(1, 1, g.height, g.width);
  for (size_t i = 0; i < g.plane.size(); ++i) t.v[i] = static_cast<T>(g.plane[i]);
  return t;
}

template <class T>
Tensor<T> raster_to_tensor(const img::RasterImage& im) {
  Tensor<T> t(1, 3, im.height, im.width);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < im.plane_size(); ++i) t.plane(0, c)[i] = static_cast<T>(im.planes[c][i]);
  return t;
}

template <class T>
img::GrayImage tensor_to_gray(const Tensor<T>& t, int n = 0) {
  img::GrayImage g;
  g.width = t.width();
  g.height = t.height();
  g.plane.resize(g.plane_size());
  const T* p = t.plane(n, 0);
  for (size_t i = 0; i < g.plane.size(); ++i) g.plane[i] = std::min(1.0, std::max(0.0, static_cast<double>(p[i])));
  return g;
}

/// Differentiable recombination of a stego Y plane with fixed cover chroma
/// into RGB. The inverse color matrix has unit Y coefficients, so each RGB
/// channel is y plus a chroma-only offset; gradients flow to y alone.
template <class T>
ad::Ref<T> merge_luma_chroma_rgb(const ad::Ref<T>& y, const Tensor<T>& cb, const Tensor<T>& cr) {
  require_same_shape(y->value, cb, "merge_luma_chroma_rgb");
  require_same_shape(y->value, cr, "merge_luma_chroma_rgb");
  const auto& m = img::ColorMatrix::bt601();
  const int n = y->value.batch(), h = y->value.height(), w = y->value.width();
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor<T> out(n, 3, h, w);
  for (int bn = 0; bn < n; ++bn) {
    const T* yp = y->value.plane(bn, 0);
    const T* cbp = cb.plane(bn, 0);
    const T* crp = cr.plane(bn, 0);
    for (int ch = 0; ch < 3; ++ch) {
      T a = static_cast<T>(m.inverse[ch][1]);
      T b = static_cast<T>(m.inverse[ch][2]);
      T off = static_cast<T>(m.inverse_offset[ch]);
      T* o = out.plane(bn, ch);
      for (size_t i = 0; i < hw; ++i) o[i] = yp[i] + a * cbp[i] + b * crp[i] + off;
    }
  }
  return ad::make_op<T>(std::move(out), {y}, [y, n, hw](ad::Node<T>& self) {
    if (!y->needs_grad) return;
    y->ensure_grad();
    for (int bn = 0; bn < n; ++bn) {
      T* dy = y->grad.plane(bn, 0);
      for (int ch = 0; ch < 3; ++ch) {
        const T* g = self.grad.plane(bn, ch);
        for (size_t i = 0; i < hw; ++i) dy[i] += g[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Hide / reveal / steganalyze pipeline
// ---------------------------------------------------------------------------

/// Encoder pass on batched tensors: concat(Y, secret) -> stego Y.
template <class T>
ad::Ref<T> encode_batch(Network<T>& enc, const ad::Ref<T>& cover_y, const ad::Ref<T>& secrets, bool train) {
  return enc.forward(ad::concat_channels<T>({cover_y, secrets}), train);
}

/// Full hide pipeline on images; returns the stego still in YCbCr so callers
/// can check chroma invariance before RGB conversion.
template <class T>
img::RasterImage hide_ycbcr(const img::RasterImage& cover, const img::GrayImage& secret, Network<T>& enc) {
  if (cover.width != secret.width || cover.height != secret.height)
    fail(ErrorCode::DimensionMismatch, "hide: cover and secret dimensions differ");
  ad::NoGrad ng;
  auto ycc = rgb_to_ycbcr(cover);
  auto y = ad::constant(gray_to_tensor<T>(img::extract_luma(ycc)));
  auto s = ad::constant(gray_to_tensor<T>(secret));
  auto stego_y = encode_batch(enc, y, s, false);
  return img::replace_luma(ycc, tensor_to_gray(stego_y->value));
}

template <class T>
img::RasterImage hide(const img::RasterImage& cover, const img::GrayImage& secret, Network<T>& enc) {
  return img::ycbcr_to_rgb(hide_ycbcr(cover, secret, enc));
}

template <class T>
img::GrayImage reveal(const img::RasterImage& stego, Network<T>& dec) {
  ad::NoGrad ng;
  auto ycc = stego.space == img::ColorSpace::YCbCr ? stego : img::rgb_to_ycbcr(stego);
  auto y = ad::constant(gray_to_tensor<T>(img::extract_luma(ycc)));
  auto revealed = dec.forward(y, false);
  return tensor_to_gray(revealed->value);
}

template <class T>
void require_steganalyzer_size(int h, int w) {
  if (h < 32 || w < 32) fail(ErrorCode::ImageTooSmall, "steganalyze: input must be at least 32x32");
  if (h % 4 != 0 || w % 4 != 0)
    fail(ErrorCode::ImageTooSmall, "steganalyze: spatial dims must be multiples of 4");
}

/// Softmax (cover, stego) probabilities for a batch of logits.
template <class T>
std::vector<std::pair<double, double>> softmax_pairs(const Tensor<T>& logits) {
  std::vector<std::pair<double, double>> out;
  for (int n = 0; n < logits.batch(); ++n) {
    double z0 = logits.at(n, 0, 0, 0), z1 = logits.at(n, 1, 0, 0);
    double zmax = std::max(z0, z1);
    double e0 = std::exp(z0 - zmax), e1 = std::exp(z1 - zmax);
    out.emplace_back(e0 / (e0 + e1), e1 / (e0 + e1));
  }
  return out;
}

template <class T>
std::pair<double, double> steganalyze(const img::RasterImage& image, Network<T>& d) {
  require_steganalyzer_size<T>(image.height, image.width);
  ad::NoGrad ng;
  auto rgb = image.space == img::ColorSpace::RGB ? image : img::ycbcr_to_rgb(image);
  auto logits = d.forward(ad::constant(raster_to_tensor<T>(rgb)), false);
  return softmax_pairs(logits->value)[0];
}

}  // namespace isgan::net
