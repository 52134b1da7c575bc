#pragma once

#include <string>
#include <vector>

#include "isgan/data.hpp"
#include "isgan/networks.hpp"
#include "isgan/train.hpp"

namespace isgan::eval {

struct PairQuality {
  std::string cover_path;
  std::string secret_path;
  double stego_psnr = 0, stego_ssim = 0;
  double secret_psnr = 0, secret_ssim = 0;
};

/// Quality of hide/reveal over a dataset split. Stego metrics are computed on
/// the Y plane against the cover Y plane; secret metrics compare the revealed
/// gray image with the original secret. Aggregates are per-pair means.
struct QualityReport {
  std::string dataset_id;
  std::string checkpoint_id;
  std::vector<PairQuality> pairs;
  double stego_psnr = 0, stego_ssim = 0;
  double secret_psnr = 0, secret_ssim = 0;
};

QualityReport evaluate_quality(net::Network<float>& enc, net::Network<float>& dec,
                               const data::DatasetManifest& manifest,
                               const std::string& checkpoint_id = "");

void write_quality_csv(const QualityReport& report, const std::string& path);
void write_quality_json(const QualityReport& report, const std::string& path);

struct SecurityConfig {
  int train_pairs = 500;  // stego/cover pairs for detector training
  int test_pairs = 200;   // held-out pairs per evaluated generator
  int detector_epochs = 4;
  int batch_size = 8;
  double detector_lr = 1e-3;
  double weight_decay = 1e-4;
  uint64_t seed = 0;
};

struct SecurityReport {
  std::string detector_training;           // provenance of the detector's training set
  std::string test_set;                    // provenance of the held-out test pairs
  double basic_accuracy = 0;               // on held-out basic-model stego/cover pairs
  std::vector<std::string> evaluated_ids;  // one per evaluated generator checkpoint
  std::vector<double> evaluated_accuracy;  // detector accuracy on that generator's stegos
};

/// Scaled security protocol: stegos from the `basic` generator train a fresh
/// steganalyzer, which is then scored on held-out basic stegos and on stegos
/// from each generator in `others` (the detector never trains on those).
SecurityReport security_experiment(net::Network<float>& basic_enc,
                                   std::vector<net::Network<float>*> other_encs,
                                   std::vector<std::string> other_ids,
                                   const data::DatasetManifest& manifest, const SecurityConfig& cfg);

void write_security_json(const SecurityReport& report, const std::string& path);

/// Per-pixel |cover - stego| on the Y plane, scaled and clamped to [0,1].
img::GrayImage residual_visualization(const img::RasterImage& cover, const img::RasterImage& stego,
                                      double amplification);

}  // namespace isgan::eval
