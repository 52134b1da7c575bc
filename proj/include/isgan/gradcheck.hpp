#pragma once

#include <functional>
#include <string>
#include <vector>

#include "isgan/autodiff.hpp"
#include "isgan/rng.hpp"

namespace isgan::check {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
};

/// Rebuilds the loss graph from the current leaf values; called repeatedly
/// with perturbed leaves during finite differencing.
using LossFn = std::function<ad::Ref<double>()>;

/// Central-difference check of d(loss)/d(leaf) for every leaf, in double.
/// `buffers` (e.g. BN running stats) are snapshotted and restored around every
/// forward so repeated evaluation is side-effect free. Large leaves are probed
/// at a deterministic subset of elements. Returns the max relative error.
inline double check_gradients(const std::vector<ad::Ref<double>>& leaves, const LossFn& loss_fn,
                              const std::vector<Tensor<double>*>& buffers, double eps = 1e-5,
                              size_t max_probes_per_leaf = 64, uint64_t probe_seed = 0x9c0ffee) {
  std::vector<Tensor<double>> saved;
  saved.reserve(buffers.size());
  for (auto* b : buffers) saved.push_back(*b);
  auto restore = [&] {
    for (size_t i = 0; i < buffers.size(); ++i) *buffers[i] = saved[i];
  };

  for (const auto& leaf : leaves) leaf->grad = Tensor<double>();
  auto loss = loss_fn();
  ad::backward(loss);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves)
    analytic.push_back(leaf->grad.empty() ? Tensor<double>::zeros_like(leaf->value) : leaf->grad);
  restore();

  auto eval = [&] {
    ad::NoGrad ng;
    double v = loss_fn()->value.v[0];
    restore();
    return v;
  };

  double max_rel = 0;
  Rng rng(probe_seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& t = leaves[li]->value;
    std::vector<size_t> probes;
    if (t.size() <= max_probes_per_leaf) {
      for (size_t i = 0; i < t.size(); ++i) probes.push_back(i);
    } else {
      for (size_t i = 0; i < max_probes_per_leaf; ++i) probes.push_back(rng.index(t.size()));
    }
    for (size_t j : probes) {
      double orig = t.v[j];
      t.v[j] = orig + eps;
      double fp = eval();
      t.v[j] = orig - eps;
      double fm = eval();
      t.v[j] = orig;
      double numeric = (fp - fm) / (2 * eps);
      double a = analytic[li].v[j];
      double rel = std::abs(a - numeric) / (std::max(std::abs(a), std::abs(numeric)) + 1e-6);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

/// Per-layer and whole-loss finite-difference suite; one entry per checked
/// construct. Seed varies the random tensors and initializations.
std::vector<GradCheckResult> run_layer_suite(uint64_t seed = 0);

inline bool all_passed(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

}  // namespace isgan::check
