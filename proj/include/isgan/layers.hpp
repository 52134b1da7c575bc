#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "isgan/autodiff.hpp"
#include "isgan/rng.hpp"

namespace isgan::nn {

template <class T>
struct NamedParam {
  std::string name;
  ad::Ref<T> node;
};

template <class T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;  // owned by the layer that registered it
};

/// Named learnable parameters plus non-learnable buffers (BN running stats).
template <class T>
class ParameterStore {
 public:
  ad::Ref<T> add_param(const std::string& name, Tensor<T> init) {
    for (const auto& p : params_)
      if (p.name == name) fail(ErrorCode::BadArgument, "duplicate parameter name: " + name);
    auto node = ad::parameter(std::move(init));
    params_.push_back({name, node});
    return node;
  }

  void add_buffer(const std::string& name, Tensor<T>* t) { buffers_.push_back({name, t}); }

  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  std::vector<NamedBuffer<T>>& buffers() { return buffers_; }
  const std::vector<NamedBuffer<T>>& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& p : params_) p.node->grad = Tensor<T>();
  }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<NamedBuffer<T>> buffers_;
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual ad::Ref<T> forward(const ad::Ref<T>& x, bool train) = 0;
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kLeakySlope = 0.2;

template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(const std::string& name, int cin, int cout, int k, int stride, int pad, Rng& rng,
         ParameterStore<T>& store)
      : stride_(stride), pad_(pad) {
    Tensor<T> w(cout, cin, k, k);
    rng.xavier_fill(w.v, cin * k * k, cout * k * k);
    w_ = store.add_param(name + ".weight", std::move(w));
    b_ = store.add_param(name + ".bias", Tensor<T>(1, cout, 1, 1));
  }

  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override { return ad::conv2d(x, w_, b_, stride_, pad_); }

  ad::Ref<T> w_, b_;

 private:
  int stride_, pad_;
};

template <class T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(const std::string& name, int c, ParameterStore<T>& store)
      : running_mean_(std::make_unique<Tensor<T>>(1, c, 1, 1)),
        running_var_(std::make_unique<Tensor<T>>(1, c, 1, 1)) {
    Tensor<T> ones(1, c, 1, 1);
    for (auto& x : ones.v) x = T(1);
    gamma_ = store.add_param(name + ".gamma", ones);
    beta_ = store.add_param(name + ".beta", Tensor<T>(1, c, 1, 1));
    for (auto& x : running_var_->v) x = T(1);
    store.add_buffer(name + ".running_mean", running_mean_.get());
    store.add_buffer(name + ".running_var", running_var_.get());
  }

  ad::Ref<T> forward(const ad::Ref<T>& x, bool train) override {
    return ad::batch_norm(x, gamma_, beta_, *running_mean_, *running_var_, train, static_cast<T>(kBnEps),
                          static_cast<T>(kBnMomentum));
  }

  ad::Ref<T> gamma_, beta_;
  std::unique_ptr<Tensor<T>> running_mean_, running_var_;
};

enum class Act { LeakyReLU, Tanh, Sigmoid };

template <class T>
class Activation : public Layer<T> {
 public:
  explicit Activation(Act kind, T slope = static_cast<T>(kLeakySlope)) : kind_(kind), slope_(slope) {}

  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override {
    switch (kind_) {
      case Act::LeakyReLU: return ad::leaky_relu(x, slope_);
      case Act::Tanh: return ad::tanh_act(x);
      case Act::Sigmoid: return ad::sigmoid_act(x);
    }
    fail(ErrorCode::BadArgument, "unknown activation");
  }

 private:
  Act kind_;
  T slope_;
};

template <class T>
class AvgPool : public Layer<T> {
 public:
  AvgPool(int k, int stride, int pad = 0) : k_(k), stride_(stride), pad_(pad) {}
  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override { return ad::avg_pool(x, k_, stride_, pad_); }

 private:
  int k_, stride_, pad_;
};

/// Spatial pyramid pooling: adaptive average pool to each level grid, flatten,
/// concatenate. Output length = C * sum(g^2).
template <class T>
class Spp : public Layer<T> {
 public:
  explicit Spp(std::vector<int> levels) : levels_(std::move(levels)) {}

  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override {
    std::vector<ad::Ref<T>> parts;
    parts.reserve(levels_.size());
    for (int g : levels_) parts.push_back(ad::flatten(ad::adaptive_avg_pool(x, g)));
    return parts.size() == 1 ? parts[0] : ad::concat_channels(parts);
  }

 private:
  std::vector<int> levels_;
};

template <class T>
class Linear : public Layer<T> {
 public:
  Linear(const std::string& name, int in, int out, Rng& rng, ParameterStore<T>& store) {
    Tensor<T> w(out, in, 1, 1);
    rng.xavier_fill(w.v, in, out);
    w_ = store.add_param(name + ".weight", std::move(w));
    b_ = store.add_param(name + ".bias", Tensor<T>(1, out, 1, 1));
  }

  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override { return ad::linear(x, w_, b_); }

  ad::Ref<T> w_, b_;
};

/// Elementwise x*s + c; maps the encoder's Tanh output from [-1,1] to [0,1].
template <class T>
class AffineRescale : public Layer<T> {
 public:
  AffineRescale(T s, T c) : s_(s), c_(c) {}
  ad::Ref<T> forward(const ad::Ref<T>& x, bool) override { return ad::affine(x, s_, c_); }

 private:
  T s_, c_;
};

template <class T>
class Sequential : public Layer<T> {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L* emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  void push(std::unique_ptr<Layer<T>> l) { layers_.push_back(std::move(l)); }

  ad::Ref<T> forward(const ad::Ref<T>& x, bool train) override {
    ad::Ref<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }

  /// Per-layer output shapes for architecture conformance checks.
  std::vector<std::array<int, 4>> trace(const ad::Ref<T>& x, bool train) {
    std::vector<std::array<int, 4>> shapes;
    ad::Ref<T> cur = x;
    for (auto& l : layers_) {
      cur = l->forward(cur, train);
      shapes.push_back(cur->value.shape);
    }
    return shapes;
  }

  size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// 3x3 Conv + BN + LeakyReLU (the tables' ConvBlock1), stride 1, pad 1.
template <class T>
std::unique_ptr<Sequential<T>> conv_bn_lrelu(const std::string& name, int cin, int cout, int k, int stride,
                                             int pad, Rng& rng, ParameterStore<T>& store) {
  auto s = std::make_unique<Sequential<T>>();
  s->template emplace<Conv2d<T>>(name + ".conv", cin, cout, k, stride, pad, rng, store);
  s->template emplace<BatchNorm<T>>(name + ".bn", cout, store);
  s->template emplace<Activation<T>>(Act::LeakyReLU);
  return s;
}

/// Four-branch inception module with residual shortcut. Each branch emits
/// cout/4 channels; the 5x5 receptive field is realized as two stacked 3x3
/// convs; branch d is a 3x3 stride-1 average pool followed by a 1x1 conv.
/// The shortcut is identity when cin == cout, otherwise a 1x1 conv + BN.
template <class T>
class InceptionResidual : public Layer<T> {
 public:
  InceptionResidual(const std::string& name, int cin, int cout, Rng& rng, ParameterStore<T>& store)
      : project_(cin != cout) {
    if (cout % 4 != 0) fail(ErrorCode::BadArgument, "InceptionResidual: out_channels must be divisible by 4");
    int q = cout / 4;
    a_ = conv_bn_lrelu<T>(name + ".a1", cin, q, 1, 1, 0, rng, store);
    b1_ = conv_bn_lrelu<T>(name + ".b1", cin, q, 1, 1, 0, rng, store);
    b2_ = conv_bn_lrelu<T>(name + ".b2", q, q, 3, 1, 1, rng, store);
    c1_ = conv_bn_lrelu<T>(name + ".c1", cin, q, 1, 1, 0, rng, store);
    c2_ = conv_bn_lrelu<T>(name + ".c2", q, q, 3, 1, 1, rng, store);
    c3_ = conv_bn_lrelu<T>(name + ".c3", q, q, 3, 1, 1, rng, store);
    d1_ = conv_bn_lrelu<T>(name + ".d1", cin, q, 1, 1, 0, rng, store);
    if (project_) {
      proj_conv_ = std::make_unique<Conv2d<T>>(name + ".proj.conv", cin, cout, 1, 1, 0, rng, store);
      proj_bn_ = std::make_unique<BatchNorm<T>>(name + ".proj.bn", cout, store);
    }
  }

  ad::Ref<T> forward(const ad::Ref<T>& x, bool train) override {
    auto a = a_->forward(x, train);
    auto b = b2_->forward(b1_->forward(x, train), train);
    auto c = c3_->forward(c2_->forward(c1_->forward(x, train), train), train);
    auto d = d1_->forward(ad::avg_pool(x, 3, 1, 1), train);
    auto branches = ad::concat_channels<T>({a, b, c, d});
    ad::Ref<T> shortcut = x;
    if (project_) shortcut = proj_bn_->forward(proj_conv_->forward(x, train), train);
    return ad::add(branches, shortcut);
  }

 private:
  bool project_;
  std::unique_ptr<Sequential<T>> a_, b1_, b2_, c1_, c2_, c3_, d1_;
  std::unique_ptr<Conv2d<T>> proj_conv_;
  std::unique_ptr<BatchNorm<T>> proj_bn_;
};

}  // namespace isgan::nn
