#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "isgan/tensor.hpp"

namespace isgan::ad {

template <class T>
class Node;

template <class T>
using Ref = std::shared_ptr<Node<T>>;

/// One tape node. `backward_fn` scatters `grad` into the inputs' grads.
template <class T>
class Node {
 public:
  Tensor<T> value;
  Tensor<T> grad;
  bool needs_grad = false;
  std::vector<Ref<T>> inputs;
  std::function<void(Node<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor<T>::zeros_like(value);
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// RAII guard disabling gradient recording (inference / oracle paths).
class NoGrad {
 public:
  NoGrad() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGrad() { grad_mode() = prev_; }

 private:
  bool prev_;
};

template <class T>
Ref<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <class T>
Ref<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->needs_grad = true;
  return n;
}

template <class T>
bool recording(const std::initializer_list<Ref<T>>& ins) {
  if (!grad_mode()) return false;
  for (const auto& i : ins)
    if (i->needs_grad) return true;
  return false;
}

template <class T>
Ref<T> make_op(Tensor<T> value, std::vector<Ref<T>> ins, std::function<void(Node<T>&)> bw) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool rec = grad_mode();
  if (rec) {
    bool any = false;
    for (const auto& i : ins) any = any || i->needs_grad;
    rec = any;
  }
  if (rec) {
    n->needs_grad = true;
    n->inputs = std::move(ins);
    n->backward_fn = std::move(bw);
  }
  return n;
}

/// Reverse-mode sweep from a scalar root (size-1 tensor).
template <class T>
void backward(const Ref<T>& root) {
  if (root->value.size() != 1) fail(ErrorCode::BadArgument, "backward: root must be scalar");
  if (!root->needs_grad) fail(ErrorCode::NoRecordedForward, "backward: no recorded forward");
  // Iterative post-order topological sort.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<T>* next = node->inputs[idx++].get();
      if (next->needs_grad && !seen.count(next)) {
        seen.insert(next);
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.v[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class T>
Ref<T> add(const Ref<T>& a, const Ref<T>& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) b->grad.v[i] += self.grad.v[i];
    }
  });
}

template <class T>
Ref<T> sub(const Ref<T>& a, const Ref<T>& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] -= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) b->grad.v[i] -= self.grad.v[i];
    }
  });
}

template <class T>
Ref<T> mul(const Ref<T>& a, const Ref<T>& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i] * b->value.v[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) b->grad.v[i] += self.grad.v[i] * a->value.v[i];
    }
  });
}

template <class T>
Ref<T> div(const Ref<T>& a, const Ref<T>& b) {
  require_same_shape(a->value, b->value, "div");
  Tensor<T> out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] /= b->value.v[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i] / b->value.v[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        T bv = b->value.v[i];
        b->grad.v[i] -= self.grad.v[i] * a->value.v[i] / (bv * bv);
      }
    }
  });
}

/// out = a * s + c  (elementwise affine with scalars)
template <class T>
Ref<T> affine(const Ref<T>& a, T s, T c) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = x * s + c;
  return make_op<T>(std::move(out), {a}, [a, s](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i] * s;
  });
}

template <class T>
Ref<T> scale(const Ref<T>& a, T s) {
  return affine(a, s, T(0));
}

template <class T>
Ref<T> pow_const(const Ref<T>& a, T p) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = std::pow(x, p);
  return make_op<T>(std::move(out), {a}, [a, p](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      a->grad.v[i] += self.grad.v[i] * p * std::pow(a->value.v[i], p - T(1));
  });
}

template <class T>
Ref<T> clamp_min(const Ref<T>& a, T lo) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = std::max(x, lo);
  return make_op<T>(std::move(out), {a}, [a, lo](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (a->value.v[i] > lo) a->grad.v[i] += self.grad.v[i];
  });
}

template <class T>
Ref<T> leaky_relu(const Ref<T>& a, T slope) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = x >= T(0) ? x : slope * x;
  return make_op<T>(std::move(out), {a}, [a, slope](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      a->grad.v[i] += self.grad.v[i] * (a->value.v[i] >= T(0) ? T(1) : slope);
  });
}

template <class T>
Ref<T> tanh_act(const Ref<T>& a) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = std::tanh(x);
  return make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      T y = self.value.v[i];
      a->grad.v[i] += self.grad.v[i] * (T(1) - y * y);
    }
  });
}

template <class T>
Ref<T> sigmoid_act(const Ref<T>& a) {
  Tensor<T> out = a->value;
  for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
  return make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      T y = self.value.v[i];
      a->grad.v[i] += self.grad.v[i] * y * (T(1) - y);
    }
  });
}

/// Mean over all elements; returns a (1,1,1,1) scalar node.
template <class T>
Ref<T> mean(const Ref<T>& a) {
  Tensor<T> out(1, 1, 1, 1);
  T s = 0;
  for (const auto& x : a->value.v) s += x;
  T inv = T(1) / static_cast<T>(a->value.size());
  // Divide rather than multiply by the reciprocal so a sum of n equal values
  // averages to that value exactly (e.g. SSIM of an image with itself is 1.0).
  out.v[0] = s / static_cast<T>(a->value.size());
  return make_op<T>(std::move(out), {a}, [a, inv](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    T g = self.grad.v[0] * inv;
    for (size_t i = 0; i < a->grad.size(); ++i) a->grad.v[i] += g;
  });
}

template <class T>
Ref<T> concat_channels(const std::vector<Ref<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::BadArgument, "concat_channels: empty");
  int n = parts[0]->value.batch(), h = parts[0]->value.height(), w = parts[0]->value.width();
  int ctot = 0;
  for (const auto& p : parts) {
    if (p->value.batch() != n || p->value.height() != h || p->value.width() != w)
      fail(ErrorCode::ShapeMismatch, "concat_channels: mismatched shapes");
    ctot += p->value.channels();
  }
  Tensor<T> out(n, ctot, h, w);
  size_t hw = static_cast<size_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    int coff = 0;
    for (const auto& p : parts) {
      for (int c = 0; c < p->value.channels(); ++c) {
        std::copy_n(p->value.plane(b, c), hw, out.plane(b, coff + c));
      }
      coff += p->value.channels();
    }
  }
  return make_op<T>(std::move(out), parts, [parts, hw](Node<T>& self) {
    int n = self.value.batch();
    for (int b = 0; b < n; ++b) {
      int coff = 0;
      for (const auto& p : parts) {
        if (p->needs_grad) {
          p->ensure_grad();
          for (int c = 0; c < p->value.channels(); ++c) {
            const T* g = self.grad.plane(b, coff + c);
            T* dst = p->grad.plane(b, c);
            for (size_t i = 0; i < hw; ++i) dst[i] += g[i];
          }
        }
        coff += p->value.channels();
      }
    }
  });
}

/// Reshape to (N, C*H*W, 1, 1).
template <class T>
Ref<T> flatten(const Ref<T>& a) {
  Tensor<T> out = a->value;
  out.shape = {a->value.batch(), a->value.channels() * a->value.height() * a->value.width(), 1, 1};
  return make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) a->grad.v[i] += self.grad.v[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM, strip-wise to bound scratch memory)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fill col (K x rows*Wo) for output rows [y0, y1) of batch item `xp`.
template <class T>
void im2col_strip(const T* xp, int cin, int h, int w, int kh, int kw, int stride, int pad, int wo, int y0, int y1,
                  T* col) {
  const int cols = (y1 - y0) * wo;
  for (int c = 0; c < cin; ++c) {
    const T* xc = xp + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) * cols;
        for (int oy = y0; oy < y1; ++oy) {
          int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<size_t>(oy - y0) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add dcol (K x rows*Wo) back into dx for output rows [y0, y1).
template <class T>
void col2im_strip(const T* col, int cin, int h, int w, int kh, int kw, int stride, int pad, int wo, int y0, int y1,
                  T* dxp) {
  const int cols = (y1 - y0) * wo;
  for (int c = 0; c < cin; ++c) {
    T* dxc = dxp + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) * cols;
        for (int oy = y0; oy < y1; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<size_t>(oy - y0) * wo;
          T* dst = dxc + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline int conv_strip_rows(int k_dim, int wo) {
  // Keep the im2col scratch under ~4M elements.
  long budget = 4L * 1024 * 1024;
  long per_row = static_cast<long>(k_dim) * wo;
  int rows = per_row > 0 ? static_cast<int>(std::max(1L, budget / per_row)) : 1;
  return rows;
}

}  // namespace detail

/// Cross-correlation. x:(N,Cin,H,W), w:(Cout,Cin,kh,kw), b:(1,Cout,1,1).
template <class T>
Ref<T> conv2d(const Ref<T>& x, const Ref<T>& w, const Ref<T>& b, int stride, int pad) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  if (ws[1] != xs[1])
    fail(ErrorCode::ShapeMismatch,
         "conv2d: in-channel mismatch " + shape_str(xs) + " vs weight " + shape_str(ws));
  if (b->value.channels() != ws[0]) fail(ErrorCode::ShapeMismatch, "conv2d: bias size mismatch");
  const int n = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  const int cout = ws[0], kh = ws[2], kw = ws[3];
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1) fail(ErrorCode::ShapeMismatch, "conv2d: output would be empty");
  const int kdim = cin * kh * kw;
  const int strip = detail::conv_strip_rows(kdim, wo);

  Tensor<T> out(n, cout, ho, wo);
  {
    std::vector<T> colbuf(static_cast<size_t>(kdim) * std::min(strip, ho) * wo);
    Eigen::Map<const detail::RowMat<T>> wmat(w->value.v.data(), cout, kdim);
    for (int bn = 0; bn < n; ++bn) {
      for (int y0 = 0; y0 < ho; y0 += strip) {
        int y1 = std::min(ho, y0 + strip);
        int cols = (y1 - y0) * wo;
        detail::im2col_strip(x->value.plane(bn, 0), cin, h, wd, kh, kw, stride, pad, wo, y0, y1, colbuf.data());
        Eigen::Map<const detail::RowMat<T>> col(colbuf.data(), kdim, cols);
        detail::RowMat<T> prod = wmat * col;
        for (int oc = 0; oc < cout; ++oc) {
          T* dst = out.plane(bn, oc) + static_cast<size_t>(y0) * wo;
          const T* src = prod.data() + static_cast<size_t>(oc) * cols;
          T bias = b->value.v[oc];
          for (int i = 0; i < cols; ++i) dst[i] = src[i] + bias;
        }
      }
    }
  }

  return make_op<T>(std::move(out), {x, w, b},
                    [x, w, b, stride, pad, n, cin, h, wd, cout, kh, kw, ho, wo, kdim, strip](Node<T>& self) {
    Eigen::Map<const detail::RowMat<T>> wmat(w->value.v.data(), cout, kdim);
    if (x->needs_grad) x->ensure_grad();
    if (w->needs_grad) w->ensure_grad();
    if (b->needs_grad) b->ensure_grad();
    std::vector<T> colbuf(static_cast<size_t>(kdim) * std::min(strip, ho) * wo);
    std::vector<T> dybuf(static_cast<size_t>(cout) * std::min(strip, ho) * wo);
    for (int bn = 0; bn < n; ++bn) {
      for (int y0 = 0; y0 < ho; y0 += strip) {
        int y1 = std::min(ho, y0 + strip);
        int cols = (y1 - y0) * wo;
        // Gather dY strip contiguously (channels x cols).
        for (int oc = 0; oc < cout; ++oc) {
          const T* src = self.grad.plane(bn, oc) + static_cast<size_t>(y0) * wo;
          std::copy_n(src, cols, dybuf.data() + static_cast<size_t>(oc) * cols);
        }
        Eigen::Map<const detail::RowMat<T>> dy(dybuf.data(), cout, cols);
        if (w->needs_grad || b->needs_grad) {
          if (w->needs_grad) {
            detail::im2col_strip(x->value.plane(bn, 0), cin, h, wd, kh, kw, stride, pad, wo, y0, y1, colbuf.data());
            Eigen::Map<const detail::RowMat<T>> col(colbuf.data(), kdim, cols);
            Eigen::Map<detail::RowMat<T>> dw(w->grad.v.data(), cout, kdim);
            dw.noalias() += dy * col.transpose();
          }
          if (b->needs_grad) {
            for (int oc = 0; oc < cout; ++oc) {
              T s = 0;
              const T* src = dybuf.data() + static_cast<size_t>(oc) * cols;
              for (int i = 0; i < cols; ++i) s += src[i];
              b->grad.v[oc] += s;
            }
          }
        }
        if (x->needs_grad) {
          detail::RowMat<T> dcol = wmat.transpose() * dy;
          detail::col2im_strip(dcol.data(), cin, h, wd, kh, kw, stride, pad, wo, y0, y1, x->grad.plane(bn, 0));
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Average pooling with zero padding included in the divisor (k*k).
template <class T>
Ref<T> avg_pool(const Ref<T>& x, int k, int stride, int pad) {
  const auto& s = x->value.shape;
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) fail(ErrorCode::ShapeMismatch, "avg_pool: output would be empty");
  Tensor<T> out(n, c, ho, wo);
  const T inv = T(1) / static_cast<T>(k * k);
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* xp = x->value.plane(bn, ch);
      T* op = out.plane(bn, ch);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) acc += xp[static_cast<size_t>(iy) * w + ix];
            }
          }
          op[static_cast<size_t>(oy) * wo + ox] = acc * inv;
        }
    }
  return make_op<T>(std::move(out), {x}, [x, k, stride, pad, n, c, h, w, ho, wo, inv](Node<T>& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int bn = 0; bn < n; ++bn)
      for (int ch = 0; ch < c; ++ch) {
        T* dx = x->grad.plane(bn, ch);
        const T* g = self.grad.plane(bn, ch);
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            T gv = g[static_cast<size_t>(oy) * wo + ox] * inv;
            for (int ky = 0; ky < k; ++ky) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < w) dx[static_cast<size_t>(iy) * w + ix] += gv;
              }
            }
          }
      }
  });
}

/// Adaptive average pooling to a g x g grid (bins floor(i*H/g) .. ceil((i+1)*H/g)).
template <class T>
Ref<T> adaptive_avg_pool(const Ref<T>& x, int g) {
  const auto& s = x->value.shape;
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  if (h < 1 || w < 1 || g < 1) fail(ErrorCode::ImageTooSmall, "adaptive_avg_pool: empty input");
  auto lo = [](int i, int d, int g) { return (i * d) / g; };
  auto hi = [](int i, int d, int g) { return ((i + 1) * d + g - 1) / g; };
  Tensor<T> out(n, c, g, g);
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* xp = x->value.plane(bn, ch);
      T* op = out.plane(bn, ch);
      for (int oy = 0; oy < g; ++oy) {
        int y0 = lo(oy, h, g), y1 = hi(oy, h, g);
        for (int ox = 0; ox < g; ++ox) {
          int x0 = lo(ox, w, g), x1 = hi(ox, w, g);
          T acc = 0;
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix) acc += xp[static_cast<size_t>(iy) * w + ix];
          op[static_cast<size_t>(oy) * g + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  return make_op<T>(std::move(out), {x}, [x, g, n, c, h, w, lo, hi](Node<T>& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int bn = 0; bn < n; ++bn)
      for (int ch = 0; ch < c; ++ch) {
        T* dx = x->grad.plane(bn, ch);
        const T* gr = self.grad.plane(bn, ch);
        for (int oy = 0; oy < g; ++oy) {
          int y0 = lo(oy, h, g), y1 = hi(oy, h, g);
          for (int ox = 0; ox < g; ++ox) {
            int x0 = lo(ox, w, g), x1 = hi(ox, w, g);
            T gv = gr[static_cast<size_t>(oy) * g + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int iy = y0; iy < y1; ++iy)
              for (int ix = x0; ix < x1; ++ix) dx[static_cast<size_t>(iy) * w + ix] += gv;
          }
        }
      }
  });
}

/// Depthwise valid cross-correlation with one fixed (non-learnable) 2D kernel.
template <class T>
Ref<T> window_filter(const Ref<T>& x, const std::vector<T>& kernel, int kh, int kw) {
  const auto& s = x->value.shape;
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  if (h < kh || w < kw) fail(ErrorCode::ImageTooSmall, "window_filter: input smaller than window");
  const int ho = h - kh + 1, wo = w - kw + 1;
  Tensor<T> out(n, c, ho, wo);
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* xp = x->value.plane(bn, ch);
      T* op = out.plane(bn, ch);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < kh; ++ky) {
            const T* row = xp + static_cast<size_t>(oy + ky) * w + ox;
            const T* kr = kernel.data() + static_cast<size_t>(ky) * kw;
            for (int kx = 0; kx < kw; ++kx) acc += row[kx] * kr[kx];
          }
          op[static_cast<size_t>(oy) * wo + ox] = acc;
        }
    }
  return make_op<T>(std::move(out), {x}, [x, kernel, kh, kw, n, c, h, w, ho, wo](Node<T>& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int bn = 0; bn < n; ++bn)
      for (int ch = 0; ch < c; ++ch) {
        T* dx = x->grad.plane(bn, ch);
        const T* g = self.grad.plane(bn, ch);
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            T gv = g[static_cast<size_t>(oy) * wo + ox];
            for (int ky = 0; ky < kh; ++ky) {
              T* row = dx + static_cast<size_t>(oy + ky) * w + ox;
              const T* kr = kernel.data() + static_cast<size_t>(ky) * kw;
              for (int kx = 0; kx < kw; ++kx) row[kx] += gv * kr[kx];
            }
          }
      }
  });
}

// ---------------------------------------------------------------------------
// Fully connected, batch norm, losses
// ---------------------------------------------------------------------------

/// Affine map. x:(N,F,1,1), w:(Out,F,1,1), b:(1,Out,1,1) -> (N,Out,1,1).
template <class T>
Ref<T> linear(const Ref<T>& x, const Ref<T>& w, const Ref<T>& b) {
  const int n = x->value.batch(), f = x->value.channels();
  const int out_dim = w->value.shape[0];
  if (w->value.shape[1] != f || x->value.height() != 1 || x->value.width() != 1)
    fail(ErrorCode::ShapeMismatch, "linear: weight " + shape_str(w->value.shape) + " vs input " +
                                       shape_str(x->value.shape));
  if (b->value.channels() != out_dim) fail(ErrorCode::ShapeMismatch, "linear: bias size mismatch");
  Tensor<T> out(n, out_dim, 1, 1);
  Eigen::Map<const detail::RowMat<T>> wm(w->value.v.data(), out_dim, f);
  Eigen::Map<const detail::RowMat<T>> xm(x->value.v.data(), n, f);
  Eigen::Map<detail::RowMat<T>> om(out.v.data(), n, out_dim);
  om.noalias() = xm * wm.transpose();
  for (int bn = 0; bn < n; ++bn)
    for (int o = 0; o < out_dim; ++o) out.v[static_cast<size_t>(bn) * out_dim + o] += b->value.v[o];
  return make_op<T>(std::move(out), {x, w, b}, [x, w, b, n, f, out_dim](Node<T>& self) {
    Eigen::Map<const detail::RowMat<T>> wm(w->value.v.data(), out_dim, f);
    Eigen::Map<const detail::RowMat<T>> xm(x->value.v.data(), n, f);
    Eigen::Map<const detail::RowMat<T>> gm(self.grad.v.data(), n, out_dim);
    if (x->needs_grad) {
      x->ensure_grad();
      Eigen::Map<detail::RowMat<T>> dxm(x->grad.v.data(), n, f);
      dxm.noalias() += gm * wm;
    }
    if (w->needs_grad) {
      w->ensure_grad();
      Eigen::Map<detail::RowMat<T>> dwm(w->grad.v.data(), out_dim, f);
      dwm.noalias() += gm.transpose() * xm;
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int bn = 0; bn < n; ++bn)
        for (int o = 0; o < out_dim; ++o) b->grad.v[o] += self.grad.v[static_cast<size_t>(bn) * out_dim + o];
    }
  });
}

/// Batch normalization. gamma/beta: (1,C,1,1). In train mode normalizes by batch
/// statistics and updates running stats in place; eval mode uses running stats.
template <class T>
Ref<T> batch_norm(const Ref<T>& x, const Ref<T>& gamma, const Ref<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool train, T eps, T momentum) {
  const auto& s = x->value.shape;
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  if (gamma->value.channels() != c || beta->value.channels() != c || running_mean.channels() != c ||
      running_var.channels() != c)
    fail(ErrorCode::ShapeMismatch, "batch_norm: per-channel parameter length != channel count");
  const size_t m = static_cast<size_t>(n) * h * w;  // elements per channel
  std::vector<T> mean_c(c), var_c(c);
  if (train) {
    for (int ch = 0; ch < c; ++ch) {
      T sum = 0;
      for (int bn = 0; bn < n; ++bn) {
        const T* p = x->value.plane(bn, ch);
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) sum += p[i];
      }
      T mu = sum / static_cast<T>(m);
      T sq = 0;
      for (int bn = 0; bn < n; ++bn) {
        const T* p = x->value.plane(bn, ch);
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) {
          T d = p[i] - mu;
          sq += d * d;
        }
      }
      mean_c[ch] = mu;
      var_c[ch] = sq / static_cast<T>(m);  // biased, used for normalization
      T unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var_c[ch];
      running_mean.v[ch] = momentum * running_mean.v[ch] + (T(1) - momentum) * mu;
      running_var.v[ch] = momentum * running_var.v[ch] + (T(1) - momentum) * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean.v[ch];
      var_c[ch] = running_var.v[ch];
    }
  }
  std::vector<T> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var_c[ch] + eps);
  Tensor<T> out(n, c, h, w);
  // Cache normalized values for the backward pass.
  auto xhat = std::make_shared<Tensor<T>>(n, c, h, w);
  for (int bn = 0; bn < n; ++bn)
    for (int ch = 0; ch < c; ++ch) {
      const T* p = x->value.plane(bn, ch);
      T* xh = xhat->plane(bn, ch);
      T* o = out.plane(bn, ch);
      T g = gamma->value.v[ch], bt = beta->value.v[ch], mu = mean_c[ch], is = inv_std[ch];
      for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) {
        xh[i] = (p[i] - mu) * is;
        o[i] = g * xh[i] + bt;
      }
    }
  return make_op<T>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, xhat, inv_std, train, n, c, h, w, m](Node<T>& self) {
    const size_t hw = static_cast<size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
      // Per-channel reductions of dY and dY*xhat.
      T sum_dy = 0, sum_dy_xh = 0;
      for (int bn = 0; bn < n; ++bn) {
        const T* g = self.grad.plane(bn, ch);
        const T* xh = xhat->plane(bn, ch);
        for (size_t i = 0; i < hw; ++i) {
          sum_dy += g[i];
          sum_dy_xh += g[i] * xh[i];
        }
      }
      if (gamma->needs_grad) {
        gamma->ensure_grad();
        gamma->grad.v[ch] += sum_dy_xh;
      }
      if (beta->needs_grad) {
        beta->ensure_grad();
        beta->grad.v[ch] += sum_dy;
      }
      if (x->needs_grad) {
        x->ensure_grad();
        T gm = gamma->value.v[ch], is = inv_std[ch];
        T inv_m = T(1) / static_cast<T>(m);
        for (int bn = 0; bn < n; ++bn) {
          const T* g = self.grad.plane(bn, ch);
          const T* xh = xhat->plane(bn, ch);
          T* dx = x->grad.plane(bn, ch);
          if (train) {
            for (size_t i = 0; i < hw; ++i)
              dx[i] += gm * is * (g[i] - inv_m * sum_dy - xh[i] * inv_m * sum_dy_xh);
          } else {
            for (size_t i = 0; i < hw; ++i) dx[i] += gm * is * g[i];
          }
        }
      }
    }
  });
}

/// Mean softmax cross-entropy over the batch. logits:(N,K,1,1).
template <class T>
Ref<T> softmax_cross_entropy(const Ref<T>& logits, const std::vector<int>& labels) {
  const int n = logits->value.batch(), k = logits->value.channels();
  if (static_cast<int>(labels.size()) != n) fail(ErrorCode::ShapeMismatch, "softmax_cross_entropy: label count");
  auto probs = std::make_shared<Tensor<T>>(n, k, 1, 1);
  T loss = 0;
  for (int bn = 0; bn < n; ++bn) {
    const T* z = logits->value.v.data() + static_cast<size_t>(bn) * k;
    T zmax = z[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
    T denom = 0;
    for (int i = 0; i < k; ++i) denom += std::exp(z[i] - zmax);
    T logdenom = std::log(denom) + zmax;
    for (int i = 0; i < k; ++i) probs->v[static_cast<size_t>(bn) * k + i] = std::exp(z[i] - logdenom);
    loss -= z[labels[bn]] - logdenom;
  }
  Tensor<T> out(1, 1, 1, 1);
  out.v[0] = loss / static_cast<T>(n);
  return make_op<T>(std::move(out), {logits}, [logits, probs, labels, n, k](Node<T>& self) {
    if (!logits->needs_grad) return;
    logits->ensure_grad();
    T g = self.grad.v[0] / static_cast<T>(n);
    for (int bn = 0; bn < n; ++bn)
      for (int i = 0; i < k; ++i) {
        T p = probs->v[static_cast<size_t>(bn) * k + i];
        logits->grad.v[static_cast<size_t>(bn) * k + i] += g * (p - (i == labels[bn] ? T(1) : T(0)));
      }
  });
}

}  // namespace isgan::ad
