#include "isgan/metrics.hpp"

#include <algorithm>

namespace isgan::metrics {

namespace {

std::vector<double> smoothed_histogram(const std::vector<double>& samples, double lo, double hi, int bins) {
  std::vector<double> counts(bins, 1.0);  // Laplace smoothing
  double range = hi - lo;
  for (double s : samples) {
    int b = range > 0 ? static_cast<int>((s - lo) / range * bins) : 0;
    b = std::clamp(b, 0, bins - 1);
    counts[b] += 1.0;
  }
  double total = static_cast<double>(samples.size()) + bins;
  for (auto& c : counts) c /= total;
  return counts;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(p[i] / q[i]);
  return std::max(0.0, acc);
}

}  // namespace

DivergenceEstimate divergence(const std::vector<double>& p_samples, const std::vector<double>& q_samples,
                              DivergenceKind kind, int bins) {
  if (p_samples.empty() || q_samples.empty()) fail(ErrorCode::EmptyInput, "divergence: empty sample set");
  if (bins < 2) fail(ErrorCode::BadArgument, "divergence: bins must be >= 2");
  double lo = p_samples[0], hi = p_samples[0];
  for (double s : p_samples) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  for (double s : q_samples) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  auto p = smoothed_histogram(p_samples, lo, hi, bins);
  auto q = smoothed_histogram(q_samples, lo, hi, bins);
  DivergenceEstimate est{kind, 0.0, bins};
  if (kind == DivergenceKind::KL) {
    est.value = kl(p, q);
  } else {
    std::vector<double> m(p.size());
    for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    est.value = 0.5 * kl(p, m) + 0.5 * kl(q, m);
  }
  return est;
}

}  // namespace isgan::metrics
