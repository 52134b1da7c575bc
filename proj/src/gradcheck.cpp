#include "isgan/gradcheck.hpp"

#include <memory>

#include "isgan/layers.hpp"
#include "isgan/metrics.hpp"
#include "isgan/networks.hpp"

namespace isgan::check {

namespace {

/// Random tensor with entries bounded away from zero (activation kinks).
Tensor<double> rand_input(Rng& rng, int n, int c, int h, int w) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.v) {
    double m = rng.uniform(0.2, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

/// Random tensor in (0,1), for image-valued metrics.
Tensor<double> rand_image(Rng& rng, int n, int c, int h, int w) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.v) v = rng.uniform(0.02, 0.98);
  return t;
}

struct Suite {
  uint64_t seed;
  std::vector<GradCheckResult> results;

  void record(const std::string& name, double err, double tol) {
    results.push_back({name, err, tol, err < tol});
  }

  /// Checks d(mean(out^2))/d{input, params} for one layer in train mode.
  void layer(const std::string& name, nn::Layer<double>& l, nn::ParameterStore<double>& store,
             Tensor<double> input, double tol = 1e-4) {
    auto x = ad::parameter(std::move(input));
    std::vector<ad::Ref<double>> leaves{x};
    for (auto& p : store.params()) leaves.push_back(p.node);
    std::vector<Tensor<double>*> buffers;
    for (auto& b : store.buffers()) buffers.push_back(b.tensor);
    double err = check_gradients(
        leaves,
        [&] {
          auto out = l.forward(x, true);
          return ad::mean(ad::mul(out, out));
        },
        buffers);
    record(name, err, tol);
  }
};

void check_metric_graphs(Suite& suite, Rng& rng) {
  const auto cfg = metrics::SsimConfig().for_size(12, 12);
  {
    auto a = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    auto b = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    double err = check_gradients({a, b}, [&] { return metrics::mse_var(a, b); }, {});
    suite.record("mse", err, 1e-4);
    err = check_gradients({a, b}, [&] { return metrics::ssim_var(a, b, cfg); }, {}, 1e-5, 32);
    suite.record("ssim", err, 1e-4);
    err = check_gradients({a, b}, [&] { return metrics::ms_ssim_var(a, b, cfg); }, {}, 1e-5, 32);
    suite.record("ms_ssim", err, 1e-4);
  }
  {
    auto win = metrics::gaussian_window<double>(5, 1.5);
    auto x = ad::parameter(rand_image(rng, 1, 1, 8, 8));
    double err = check_gradients(
        {x},
        [&] {
          auto f = ad::window_filter(x, win, 5, 5);
          return ad::mean(ad::mul(f, f));
        },
        {});
    suite.record("window_filter", err, 1e-4);
  }
  {
    auto c = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    auto c2 = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    auto s = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    auto s2 = ad::parameter(rand_image(rng, 1, 1, 12, 12));
    metrics::LossWeights w;
    double err = check_gradients(
        {c, c2, s, s2}, [&] { return metrics::total_loss_var(c, c2, s, s2, w, cfg); }, {}, 1e-5, 24);
    suite.record("total_loss", err, 1e-3);
  }
  {
    auto logits = ad::parameter(rand_input(rng, 3, 2, 1, 1));
    std::vector<int> labels{0, 1, 1};
    double err =
        check_gradients({logits}, [&] { return ad::softmax_cross_entropy(logits, labels); }, {});
    suite.record("softmax_cross_entropy", err, 1e-4);
  }
  {
    auto y = ad::parameter(rand_image(rng, 1, 1, 6, 6));
    Tensor<double> cb = rand_image(rng, 1, 1, 6, 6), cr = rand_image(rng, 1, 1, 6, 6);
    double err = check_gradients(
        {y},
        [&] {
          auto rgb = net::merge_luma_chroma_rgb(y, cb, cr);
          return ad::mean(ad::mul(rgb, rgb));
        },
        {});
    suite.record("merge_luma_chroma", err, 1e-4);
  }
  {
    auto a = ad::parameter(rand_input(rng, 1, 2, 4, 4));
    auto b = ad::parameter(rand_input(rng, 1, 3, 4, 4));
    double err = check_gradients(
        {a, b},
        [&] {
          auto c = ad::concat_channels<double>({a, b});
          return ad::mean(ad::mul(c, c));
        },
        {});
    suite.record("concat_channels", err, 1e-4);
  }
}

/// Structural invariant: a zero secret-loss weight must leave every decoder
/// parameter gradient exactly zero after backward.
void check_decoder_routing(Suite& suite, uint64_t seed) {
  auto enc = net::build_encoder<double>(seed);
  auto dec = net::build_decoder<double>(seed + 1);
  Rng rng(seed + 2);
  auto cover_y = ad::constant(rand_image(rng, 1, 1, 16, 16));
  auto secret = ad::constant(rand_image(rng, 1, 1, 16, 16));
  const auto cfg = metrics::SsimConfig().for_size(16, 16);
  metrics::LossWeights w;
  auto stego = net::encode_batch(*enc, cover_y, secret, true);
  auto revealed = dec->forward(stego, true);
  auto lc = metrics::image_loss_var(cover_y, stego, w, cfg);
  auto ls = metrics::image_loss_var(secret, revealed, w, cfg);
  auto loss = ad::add(lc, ad::scale(ls, 0.0));
  enc->store.zero_grad();
  dec->store.zero_grad();
  ad::backward(loss);
  double dec_max = 0;
  for (auto& p : dec->store.params())
    if (!p.node->grad.empty())
      for (double g : p.node->grad.v) dec_max = std::max(dec_max, std::abs(g));
  suite.results.push_back({"decoder_routing_gamma0", dec_max, 0.0, dec_max == 0.0});
  double enc_max = 0;
  for (auto& p : enc->store.params())
    if (!p.node->grad.empty())
      for (double g : p.node->grad.v) enc_max = std::max(enc_max, std::abs(g));
  suite.results.push_back({"encoder_grads_nonzero", enc_max, 0.0, enc_max > 0.0});
}

}  // namespace

std::vector<GradCheckResult> run_layer_suite(uint64_t seed) {
  Suite suite{seed, {}};
  Rng rng(seed + 17);

  auto with_store = [&](const std::string& name, auto make_layer, Tensor<double> input, double tol = 1e-4) {
    nn::ParameterStore<double> store;
    Rng init(seed + 101);
    auto layer = make_layer(init, store);
    suite.layer(name, *layer, store, std::move(input), tol);
  };

  with_store(
      "conv3x3",
      [](Rng& r, nn::ParameterStore<double>& s) {
        return std::make_unique<nn::Conv2d<double>>("w", 3, 4, 3, 1, 1, r, s);
      },
      rand_input(rng, 2, 3, 6, 6));
  with_store(
      "conv1x1_stride2",
      [](Rng& r, nn::ParameterStore<double>& s) {
        return std::make_unique<nn::Conv2d<double>>("w", 4, 3, 1, 2, 0, r, s);
      },
      rand_input(rng, 1, 4, 8, 8));
  with_store(
      "batch_norm",
      [](Rng&, nn::ParameterStore<double>& s) { return std::make_unique<nn::BatchNorm<double>>("w", 4, s); },
      rand_input(rng, 3, 4, 5, 5));
  with_store(
      "leaky_relu",
      [](Rng&, nn::ParameterStore<double>&) {
        return std::make_unique<nn::Activation<double>>(nn::Act::LeakyReLU);
      },
      rand_input(rng, 2, 3, 4, 4));
  with_store(
      "tanh",
      [](Rng&, nn::ParameterStore<double>&) { return std::make_unique<nn::Activation<double>>(nn::Act::Tanh); },
      rand_input(rng, 2, 3, 4, 4));
  with_store(
      "sigmoid",
      [](Rng&, nn::ParameterStore<double>&) {
        return std::make_unique<nn::Activation<double>>(nn::Act::Sigmoid);
      },
      rand_input(rng, 2, 3, 4, 4));
  with_store(
      "avg_pool2",
      [](Rng&, nn::ParameterStore<double>&) { return std::make_unique<nn::AvgPool<double>>(2, 2); },
      rand_input(rng, 1, 3, 8, 8));
  with_store(
      "avg_pool3_pad",
      [](Rng&, nn::ParameterStore<double>&) { return std::make_unique<nn::AvgPool<double>>(3, 1, 1); },
      rand_input(rng, 1, 2, 6, 6));
  with_store(
      "spp",
      [](Rng&, nn::ParameterStore<double>&) {
        return std::make_unique<nn::Spp<double>>(std::vector<int>{1, 2, 4});
      },
      rand_input(rng, 1, 3, 8, 8));
  with_store(
      "spp_small_input",
      [](Rng&, nn::ParameterStore<double>&) {
        return std::make_unique<nn::Spp<double>>(std::vector<int>{1, 2, 4});
      },
      rand_input(rng, 1, 2, 3, 3));
  with_store(
      "linear",
      [](Rng& r, nn::ParameterStore<double>& s) {
        return std::make_unique<nn::Linear<double>>("w", 10, 7, r, s);
      },
      rand_input(rng, 2, 10, 1, 1));
  with_store(
      "affine_rescale",
      [](Rng&, nn::ParameterStore<double>&) { return std::make_unique<nn::AffineRescale<double>>(0.5, 0.5); },
      rand_input(rng, 1, 2, 4, 4));
  with_store(
      "inception_residual_identity",
      [](Rng& r, nn::ParameterStore<double>& s) {
        return std::make_unique<nn::InceptionResidual<double>>("w", 4, 4, r, s);
      },
      rand_input(rng, 1, 4, 6, 6));
  with_store(
      "inception_residual_project",
      [](Rng& r, nn::ParameterStore<double>& s) {
        return std::make_unique<nn::InceptionResidual<double>>("w", 4, 8, r, s);
      },
      rand_input(rng, 1, 4, 6, 6));

  check_metric_graphs(suite, rng);
  check_decoder_routing(suite, seed + 1000);
  return suite.results;
}

}  // namespace isgan::check
