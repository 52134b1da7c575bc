#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isgan/data.hpp"
#include "isgan/metrics.hpp"
#include "isgan/networks.hpp"

namespace isgan::train {

enum class LossMode { Mixed, MseOnly };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr_initial = 1e-4;
  int lr_decay_start_epoch = 20;
  double lr_decay_factor = 0.5;
  int lr_decay_interval = 10;
  metrics::LossWeights loss_weights;
  double adv_weight = 0.1;      // generator-side weight of the adversarial term
  double weight_decay = 1e-4;   // L2 term, applied to the steganalyzer
  double steganalyzer_lr = 1e-3;
  bool label_flip = true;       // flip targets in the generator's adversarial term
  LossMode loss_mode = LossMode::Mixed;
  uint64_t seed = 0;

  void validate() const {
    if (lr_initial <= 0) fail(ErrorCode::BadArgument, "TrainConfig: lr must be > 0");
    if (batch_size < 1) fail(ErrorCode::BadArgument, "TrainConfig: batch_size must be >= 1");
    if (adv_weight < 0) fail(ErrorCode::BadArgument, "TrainConfig: adv_weight must be >= 0");
    loss_weights.validate();
  }
};

double lr_schedule(int epoch, const TrainConfig& cfg);

enum class OptKind { Adam, Sgd };

/// Adam or momentum-SGD over one parameter store. Weight decay enters as an
/// L2 gradient term. Moment buffers are indexed by registration order.
template <class T>
class Optimizer {
 public:
  Optimizer(OptKind kind, double weight_decay = 0.0) : kind_(kind), weight_decay_(weight_decay) {}

  OptKind kind() const { return kind_; }
  long step_count() const { return step_; }
  double weight_decay() const { return weight_decay_; }

  // Adam defaults beta1=0.9, beta2=0.999, eps=1e-8; SGD momentum 0.9.
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, momentum = 0.9;

  void step(nn::ParameterStore<T>& store, double lr) {
    auto& params = store.params();
    if (slots_.empty()) slots_.resize(params.size());
    if (slots_.size() != params.size()) fail(ErrorCode::ShapeMismatch, "optimizer: parameter count changed");
    ++step_;
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(beta1, static_cast<double>(step_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(beta2, static_cast<double>(step_)));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& node = *params[i].node;
      auto& slot = slots_[i];
      Tensor<T>& p = node.value;
      if (node.grad.empty()) node.grad = Tensor<T>::zeros_like(p);
      if (!node.grad.same_shape(p)) fail(ErrorCode::ShapeMismatch, "optimizer: grad shape mismatch");
      if (slot.m.empty()) slot.m = Tensor<T>::zeros_like(p);
      if (kind_ == OptKind::Adam && slot.v.empty()) slot.v = Tensor<T>::zeros_like(p);
      const T wd = static_cast<T>(weight_decay_);
      for (size_t j = 0; j < p.size(); ++j) {
        T g = node.grad.v[j] + wd * p.v[j];
        if (kind_ == OptKind::Adam) {
          slot.m.v[j] = b1 * slot.m.v[j] + (T(1) - b1) * g;
          slot.v.v[j] = b2 * slot.v.v[j] + (T(1) - b2) * g * g;
          T mhat = slot.m.v[j] / bc1;
          T vhat = slot.v.v[j] / bc2;
          p.v[j] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + static_cast<T>(eps));
        } else {
          slot.m.v[j] = static_cast<T>(momentum) * slot.m.v[j] + g;
          p.v[j] -= static_cast<T>(lr) * slot.m.v[j];
        }
      }
    }
  }

  struct Slot {
    Tensor<T> m;  // Adam first moment, or SGD momentum buffer
    Tensor<T> v;  // Adam second moment
  };

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void set_step_count(long s) { step_ = s; }

 private:
  OptKind kind_;
  double weight_decay_;
  long step_ = 0;
  std::vector<Slot> slots_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double loss_cover = 0;
  double loss_secret = 0;
  double stego_ssim = 0, stego_psnr = 0;
  double secret_ssim = 0, secret_psnr = 0;
  double steganalyzer_accuracy = -1;  // -1 when not applicable
};

using History = std::vector<EpochStats>;

void write_history_csv(const History& history, const std::string& path);

/// Encoder+decoder trainer for the non-adversarial objective.
class BasicTrainer {
 public:
  BasicTrainer(net::Network<float>& enc, net::Network<float>& dec, TrainConfig cfg);

  EpochStats run_epoch(const data::DatasetManifest& dataset, int epoch);
  History run(const data::DatasetManifest& dataset);

  Optimizer<float>& encoder_optimizer() { return enc_opt_; }
  Optimizer<float>& decoder_optimizer() { return dec_opt_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  net::Network<float>& enc_;
  net::Network<float>& dec_;
  TrainConfig cfg_;
  Optimizer<float> enc_opt_{OptKind::Adam};
  Optimizer<float> dec_opt_{OptKind::Adam};
};

/// Adversarial trainer: alternates a steganalyzer SGD step (fresh batch,
/// cover=0 / stego=1 cross-entropy, weight decay) with a generator Adam step
/// on total_loss + adv_weight * adversarial term.
class IsganTrainer {
 public:
  IsganTrainer(net::Network<float>& enc, net::Network<float>& dec, net::Network<float>& steg,
               TrainConfig cfg);

  EpochStats run_epoch(const data::DatasetManifest& dataset, int epoch);
  History run(const data::DatasetManifest& dataset);

  Optimizer<float>& encoder_optimizer() { return enc_opt_; }
  Optimizer<float>& decoder_optimizer() { return dec_opt_; }
  Optimizer<float>& steganalyzer_optimizer() { return steg_opt_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  net::Network<float>& enc_;
  net::Network<float>& dec_;
  net::Network<float>& steg_;
  TrainConfig cfg_;
  Optimizer<float> enc_opt_{OptKind::Adam};
  Optimizer<float> dec_opt_{OptKind::Adam};
  Optimizer<float> steg_opt_{OptKind::Sgd};
};

History train_basic(const data::DatasetManifest& dataset, net::Network<float>& enc,
                    net::Network<float>& dec, const TrainConfig& cfg);
History train_isgan(const data::DatasetManifest& dataset, net::Network<float>& enc,
                    net::Network<float>& dec, net::Network<float>& steg, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints ("ISGN", versioned, named little-endian float32 tensors)
// ---------------------------------------------------------------------------

struct Checkpoint {
  uint32_t epoch = 0;
  TrainConfig config;
  std::unique_ptr<net::Network<float>> encoder;
  std::unique_ptr<net::Network<float>> decoder;
  std::unique_ptr<net::Network<float>> steganalyzer;
  std::unique_ptr<Optimizer<float>> encoder_opt;
  std::unique_ptr<Optimizer<float>> decoder_opt;
  std::unique_ptr<Optimizer<float>> steganalyzer_opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Internal training helpers shared with the evaluation harness.
namespace detail {

struct YcbcrBatch {
  Tensor<float> y, cb, cr;  // each (N,1,H,W)
};

YcbcrBatch split_ycbcr(const Tensor<float>& rgb);

}  // namespace detail

}  // namespace isgan::train
