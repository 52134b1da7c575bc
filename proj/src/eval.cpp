#include "isgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "isgan/rng.hpp"

namespace isgan::eval {

namespace {

// Reports must stay finite; cap PSNR where MSE underflows to zero.
double capped_psnr(double v) { return std::min(v, 200.0); }

std::string manifest_id(const data::DatasetManifest& m) {
  std::ostringstream s;
  s << m.root << " split=" << m.split << " size=" << m.target_w << "x" << m.target_h
    << " pairs=" << m.pairs.size() << " seed=" << m.seed;
  return s.str();
}

}  // namespace

QualityReport evaluate_quality(net::Network<float>& enc, net::Network<float>& dec,
                               const data::DatasetManifest& manifest, const std::string& checkpoint_id) {
  if (manifest.pairs.empty()) fail(ErrorCode::EmptyDataset, "evaluate_quality: empty dataset");
  const auto scfg = metrics::SsimConfig().for_size(manifest.target_h, manifest.target_w);
  QualityReport report;
  report.dataset_id = manifest_id(manifest);
  report.checkpoint_id = checkpoint_id;
  ad::NoGrad ng;
  for (size_t i = 0; i < manifest.pairs.size(); ++i) {
    auto batch = data::load_pair(manifest, i);
    auto ycc = train::detail::split_ycbcr(batch.covers);
    auto stego_y = net::encode_batch(enc, ad::constant(ycc.y), ad::constant(batch.secrets), false);
    auto revealed = dec.forward(stego_y, false);
    PairQuality q;
    q.cover_path = batch.cover_paths[0];
    q.secret_path = batch.secret_paths[0];
    q.stego_psnr = capped_psnr(metrics::psnr(ycc.y, stego_y->value));
    q.stego_ssim = metrics::ssim(ycc.y, stego_y->value, scfg);
    q.secret_psnr = capped_psnr(metrics::psnr(batch.secrets, revealed->value));
    q.secret_ssim = metrics::ssim(batch.secrets, revealed->value, scfg);
    report.stego_psnr += q.stego_psnr;
    report.stego_ssim += q.stego_ssim;
    report.secret_psnr += q.secret_psnr;
    report.secret_ssim += q.secret_ssim;
    report.pairs.push_back(std::move(q));
  }
  const double n = static_cast<double>(report.pairs.size());
  report.stego_psnr /= n;
  report.stego_ssim /= n;
  report.secret_psnr /= n;
  report.secret_ssim /= n;
  return report;
}

void write_quality_csv(const QualityReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write report " + path);
  out.precision(9);
  out << "cover,secret,stego_psnr,stego_ssim,secret_psnr,secret_ssim\n";
  for (const auto& q : report.pairs)
    out << q.cover_path << ',' << q.secret_path << ',' << q.stego_psnr << ',' << q.stego_ssim << ','
        << q.secret_psnr << ',' << q.secret_ssim << '\n';
  out << "aggregate,," << report.stego_psnr << ',' << report.stego_ssim << ',' << report.secret_psnr << ','
      << report.secret_ssim << '\n';
}

void write_quality_json(const QualityReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["dataset"] = report.dataset_id;
  j["checkpoint"] = report.checkpoint_id;
  j["aggregate"] = {{"stego_psnr", report.stego_psnr},
                    {"stego_ssim", report.stego_ssim},
                    {"secret_psnr", report.secret_psnr},
                    {"secret_ssim", report.secret_ssim}};
  auto& pairs = j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& q : report.pairs)
    pairs.push_back({{"cover", q.cover_path},
                     {"secret", q.secret_path},
                     {"stego_psnr", q.stego_psnr},
                     {"stego_ssim", q.stego_ssim},
                     {"secret_psnr", q.secret_psnr},
                     {"secret_ssim", q.secret_ssim}});
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write report " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Security experiment
// ---------------------------------------------------------------------------

namespace {

/// Cover/stego example pool, covers first (label 0) then stegos (label 1).
struct ExamplePool {
  Tensor<float> covers;  // (M,3,H,W)
  Tensor<float> stegos;  // (M,3,H,W)

  int size() const { return covers.batch(); }
};

/// Draws `count` pair samples from the manifest by cycling deterministic
/// reshuffles, then renders covers next to eval-mode stegos from `enc`.
ExamplePool make_pool(net::Network<float>& enc, const data::DatasetManifest& manifest, int count,
                      uint64_t salt, int batch_size) {
  std::vector<size_t> order;
  order.reserve(count);
  for (int e = 0; static_cast<int>(order.size()) < count; ++e) {
    auto perm = data::epoch_order(manifest, e, salt);
    for (size_t p : perm) {
      order.push_back(p);
      if (static_cast<int>(order.size()) == count) break;
    }
  }
  const int h = manifest.target_h, w = manifest.target_w;
  ExamplePool pool{Tensor<float>(count, 3, h, w), Tensor<float>(count, 3, h, w)};
  ad::NoGrad ng;
  const size_t stride = static_cast<size_t>(3) * h * w;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    auto batch = data::next_batch(manifest, order, start, batch_size);
    auto ycc = train::detail::split_ycbcr(batch.covers);
    auto stego_y = net::encode_batch(enc, ad::constant(ycc.y), ad::constant(batch.secrets), false);
    auto stego_rgb = net::merge_luma_chroma_rgb(stego_y, ycc.cb, ycc.cr);
    std::copy(batch.covers.v.begin(), batch.covers.v.end(), pool.covers.v.begin() + start * stride);
    std::copy(stego_rgb->value.v.begin(), stego_rgb->value.v.end(), pool.stegos.v.begin() + start * stride);
  }
  return pool;
}

Tensor<float> gather_examples(const ExamplePool& pool, const std::vector<int>& idx, size_t start,
                              size_t end) {
  const int h = pool.covers.height(), w = pool.covers.width();
  const size_t stride = static_cast<size_t>(3) * h * w;
  Tensor<float> out(static_cast<int>(end - start), 3, h, w);
  for (size_t i = start; i < end; ++i) {
    int ex = idx[i];
    const Tensor<float>& src = ex < pool.size() ? pool.covers : pool.stegos;
    size_t plane = ex < pool.size() ? ex : ex - pool.size();
    std::copy(src.v.begin() + plane * stride, src.v.begin() + (plane + 1) * stride,
              out.v.begin() + (i - start) * stride);
  }
  return out;
}

double detector_accuracy(net::Network<float>& det, const ExamplePool& pool, int batch_size) {
  ad::NoGrad ng;
  std::vector<int> idx(2 * pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  long correct = 0;
  for (size_t start = 0; start < idx.size(); start += batch_size) {
    size_t end = std::min(idx.size(), start + batch_size);
    auto x = gather_examples(pool, idx, start, end);
    auto logits = det.forward(ad::constant(x), false);
    for (size_t i = start; i < end; ++i) {
      int n = static_cast<int>(i - start);
      int label = idx[i] < pool.size() ? 0 : 1;
      int pred = logits->value.at(n, 1, 0, 0) > logits->value.at(n, 0, 0, 0) ? 1 : 0;
      correct += pred == label;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

SecurityReport security_experiment(net::Network<float>& basic_enc,
                                   std::vector<net::Network<float>*> other_encs,
                                   std::vector<std::string> other_ids,
                                   const data::DatasetManifest& manifest, const SecurityConfig& cfg) {
  if (other_encs.size() != other_ids.size())
    fail(ErrorCode::BadArgument, "security_experiment: ids must match generators");
  if (cfg.train_pairs < 1 || cfg.test_pairs < 1)
    fail(ErrorCode::BadArgument, "security_experiment: pair counts must be >= 1");
  net::require_steganalyzer_size<float>(manifest.target_h, manifest.target_w);
  // Disjoint sample streams: the detector trains only on basic-model data.
  constexpr uint64_t kTrainSalt = 0xA11CEu, kTestSalt = 0xB0B0u;
  auto train_pool = make_pool(basic_enc, manifest, cfg.train_pairs, kTrainSalt, cfg.batch_size);
  auto test_pool = make_pool(basic_enc, manifest, cfg.test_pairs, kTestSalt, cfg.batch_size);

  auto det = net::build_steganalyzer<float>(cfg.seed);
  train::Optimizer<float> opt(train::OptKind::Sgd, cfg.weight_decay);
  Rng rng(cfg.seed ^ 0x5EC5EC5EC5ull);
  std::vector<int> idx(2 * train_pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (int epoch = 0; epoch < cfg.detector_epochs; ++epoch) {
    rng.shuffle(idx);
    for (size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      size_t end = std::min(idx.size(), start + cfg.batch_size);
      auto x = gather_examples(train_pool, idx, start, end);
      std::vector<int> labels;
      for (size_t i = start; i < end; ++i) labels.push_back(idx[i] < train_pool.size() ? 0 : 1);
      det->store.zero_grad();
      auto logits = det->forward(ad::constant(x), true);
      auto loss = ad::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(static_cast<double>(loss->value.v[0])))
        fail(ErrorCode::NonFiniteLoss, "security_experiment: detector loss diverged");
      ad::backward(loss);
      opt.step(det->store, cfg.detector_lr);
    }
  }

  SecurityReport report;
  {
    std::ostringstream s;
    s << cfg.train_pairs << " basic-model stego/cover pairs from " << manifest_id(manifest)
      << " (sample salt " << kTrainSalt << ")";
    report.detector_training = s.str();
    std::ostringstream t;
    t << cfg.test_pairs << " held-out pairs (sample salt " << kTestSalt << ")";
    report.test_set = t.str();
  }
  report.basic_accuracy = detector_accuracy(*det, test_pool, cfg.batch_size);
  for (size_t i = 0; i < other_encs.size(); ++i) {
    auto pool = make_pool(*other_encs[i], manifest, cfg.test_pairs, kTestSalt, cfg.batch_size);
    report.evaluated_ids.push_back(other_ids[i]);
    report.evaluated_accuracy.push_back(detector_accuracy(*det, pool, cfg.batch_size));
  }
  return report;
}

void write_security_json(const SecurityReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["detector_training"] = report.detector_training;
  j["test_set"] = report.test_set;
  j["basic_accuracy"] = report.basic_accuracy;
  auto& entries = j["evaluated"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < report.evaluated_ids.size(); ++i)
    entries.push_back({{"id", report.evaluated_ids[i]}, {"accuracy", report.evaluated_accuracy[i]}});
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write report " + path);
  out << j.dump(2) << '\n';
}

img::GrayImage residual_visualization(const img::RasterImage& cover, const img::RasterImage& stego,
                                      double amplification) {
  if (cover.width != stego.width || cover.height != stego.height)
    fail(ErrorCode::DimensionMismatch, "residual_visualization: dimensions differ");
  auto luma = [](const img::RasterImage& im) {
    return im.space == img::ColorSpace::YCbCr ? img::extract_luma(im) : img::luma_of_rgb(im);
  };
  auto yc = luma(cover);
  auto ys = luma(stego);
  img::GrayImage out;
  out.width = cover.width;
  out.height = cover.height;
  out.plane.resize(out.plane_size());
  for (size_t i = 0; i < out.plane.size(); ++i)
    out.plane[i] = std::min(1.0, std::abs(yc.plane[i] - ys.plane[i]) * amplification);
  return out;
}

}  // namespace isgan::eval
