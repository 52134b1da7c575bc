#include "isgan.h"

#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "isgan/data.hpp"
#include "isgan/eval.hpp"
#include "isgan/gradcheck.hpp"
#include "isgan/networks.hpp"
#include "isgan/train.hpp"

using namespace isgan;

struct isgan_image {
  img::AnyImage image;
};

struct isgan_model {
  train::Checkpoint ckpt;
};

struct isgan_train_config {
  std::map<std::string, double> values;
};

namespace {

thread_local std::string g_last_error = "";

isgan_status map_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::Io: return ISGAN_ERR_IO;
    case ErrorCode::FileNotFound: return ISGAN_ERR_NOT_FOUND;
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::WrongColorSpace: return ISGAN_ERR_FORMAT;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidSize:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::ImageTooSmall: return ISGAN_ERR_DIMENSION;
    case ErrorCode::EmptyInput:
    case ErrorCode::BadArgument: return ISGAN_ERR_ARGUMENT;
    case ErrorCode::EmptyDataset:
    case ErrorCode::InsufficientImages: return ISGAN_ERR_DATASET;
    case ErrorCode::NonFiniteLoss: return ISGAN_ERR_NUMERIC;
    case ErrorCode::BadMagic:
    case ErrorCode::VersionMismatch: return ISGAN_ERR_CHECKPOINT;
    case ErrorCode::NoRecordedForward: return ISGAN_ERR_INTERNAL;
  }
  return ISGAN_ERR_INTERNAL;
}

template <class F>
isgan_status guarded(F&& f) {
  try {
    f();
    return ISGAN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ISGAN_ERR_INTERNAL;
  }
}

isgan_status arg_error(const std::string& msg) {
  g_last_error = msg;
  return ISGAN_ERR_ARGUMENT;
}

double cfg_get(const isgan_train_config* c, const std::string& key, double fallback) {
  if (!c) return fallback;
  auto it = c->values.find(key);
  return it == c->values.end() ? fallback : it->second;
}

train::TrainConfig to_train_config(const isgan_train_config* c) {
  train::TrainConfig t;
  t.epochs = static_cast<int>(cfg_get(c, "epochs", t.epochs));
  t.batch_size = static_cast<int>(cfg_get(c, "batch_size", t.batch_size));
  t.lr_initial = cfg_get(c, "lr", t.lr_initial);
  t.lr_decay_start_epoch = static_cast<int>(cfg_get(c, "lr_decay_start", t.lr_decay_start_epoch));
  t.lr_decay_factor = cfg_get(c, "lr_decay_factor", t.lr_decay_factor);
  t.lr_decay_interval = static_cast<int>(cfg_get(c, "lr_decay_interval", t.lr_decay_interval));
  t.loss_weights.alpha = cfg_get(c, "alpha", t.loss_weights.alpha);
  t.loss_weights.beta = cfg_get(c, "beta", t.loss_weights.beta);
  t.loss_weights.gamma = cfg_get(c, "gamma", t.loss_weights.gamma);
  t.adv_weight = cfg_get(c, "adv_weight", t.adv_weight);
  t.weight_decay = cfg_get(c, "weight_decay", t.weight_decay);
  t.steganalyzer_lr = cfg_get(c, "steganalyzer_lr", t.steganalyzer_lr);
  t.label_flip = cfg_get(c, "label_flip", 1.0) != 0.0;
  t.loss_mode = cfg_get(c, "mse_only", 0.0) != 0.0 ? train::LossMode::MseOnly : train::LossMode::Mixed;
  t.seed = static_cast<uint64_t>(cfg_get(c, "seed", 0.0));
  return t;
}

img::RasterImage as_rgb(const img::AnyImage& any) {
  if (const auto* r = std::get_if<img::RasterImage>(&any))
    return r->space == img::ColorSpace::RGB ? *r : img::ycbcr_to_rgb(*r);
  return img::gray_to_rgb(std::get<img::GrayImage>(any));
}

img::GrayImage as_gray(const img::AnyImage& any) {
  if (const auto* g = std::get_if<img::GrayImage>(&any)) return *g;
  const auto& r = std::get<img::RasterImage>(any);
  return r.space == img::ColorSpace::RGB ? img::luma_of_rgb(r) : img::extract_luma(r);
}

}  // namespace

extern "C" {

const char* isgan_last_error(void) { return g_last_error.c_str(); }

const char* isgan_status_name(isgan_status status) {
  switch (status) {
    case ISGAN_OK: return "ok";
    case ISGAN_ERR_IO: return "io";
    case ISGAN_ERR_NOT_FOUND: return "not_found";
    case ISGAN_ERR_FORMAT: return "format";
    case ISGAN_ERR_ARGUMENT: return "argument";
    case ISGAN_ERR_DIMENSION: return "dimension";
    case ISGAN_ERR_DATASET: return "dataset";
    case ISGAN_ERR_NUMERIC: return "numeric";
    case ISGAN_ERR_CHECKPOINT: return "checkpoint";
    case ISGAN_ERR_INTERNAL: return "internal";
  }
  return "?";
}

isgan_status isgan_image_load(const char* path, isgan_image** out) {
  if (!path || !out) return arg_error("isgan_image_load: NULL argument");
  return guarded([&] { *out = new isgan_image{img::load_image(path)}; });
}

isgan_status isgan_image_save(const isgan_image* image, const char* path) {
  if (!image || !path) return arg_error("isgan_image_save: NULL argument");
  return guarded([&] { img::save_image(image->image, path); });
}

isgan_status isgan_image_size(const isgan_image* image, int* width, int* height, int* channels) {
  if (!image) return arg_error("isgan_image_size: NULL image");
  int w, h, c;
  if (const auto* r = std::get_if<img::RasterImage>(&image->image)) {
    w = r->width;
    h = r->height;
    c = 3;
  } else {
    const auto& g = std::get<img::GrayImage>(image->image);
    w = g.width;
    h = g.height;
    c = 1;
  }
  if (width) *width = w;
  if (height) *height = h;
  if (channels) *channels = c;
  return ISGAN_OK;
}

void isgan_image_free(isgan_image* image) { delete image; }

isgan_status isgan_model_new(uint64_t seed, int with_steganalyzer, isgan_model** out) {
  if (!out) return arg_error("isgan_model_new: NULL out");
  return guarded([&] {
    auto* m = new isgan_model;
    m->ckpt.config.seed = seed;
    m->ckpt.encoder = net::build_encoder<float>(seed);
    m->ckpt.decoder = net::build_decoder<float>(seed + 1);
    if (with_steganalyzer) m->ckpt.steganalyzer = net::build_steganalyzer<float>(seed + 2);
    *out = m;
  });
}

isgan_status isgan_model_load(const char* path, isgan_model** out) {
  if (!path || !out) return arg_error("isgan_model_load: NULL argument");
  return guarded([&] { *out = new isgan_model{train::load_checkpoint(path)}; });
}

isgan_status isgan_model_save(const isgan_model* model, const char* path) {
  if (!model || !path) return arg_error("isgan_model_save: NULL argument");
  return guarded([&] { train::save_checkpoint(model->ckpt, path); });
}

void isgan_model_free(isgan_model* model) { delete model; }

isgan_status isgan_hide(isgan_model* model, const isgan_image* cover, const isgan_image* secret,
                        isgan_image** stego_out) {
  if (!model || !cover || !secret || !stego_out) return arg_error("isgan_hide: NULL argument");
  if (!model->ckpt.encoder) return arg_error("isgan_hide: model has no encoder");
  return guarded([&] {
    auto stego = net::hide(as_rgb(cover->image), as_gray(secret->image), *model->ckpt.encoder);
    *stego_out = new isgan_image{std::move(stego)};
  });
}

isgan_status isgan_reveal(isgan_model* model, const isgan_image* stego, isgan_image** secret_out) {
  if (!model || !stego || !secret_out) return arg_error("isgan_reveal: NULL argument");
  if (!model->ckpt.decoder) return arg_error("isgan_reveal: model has no decoder");
  return guarded([&] {
    auto revealed = net::reveal(as_rgb(stego->image), *model->ckpt.decoder);
    *secret_out = new isgan_image{std::move(revealed)};
  });
}

isgan_status isgan_steganalyze(isgan_model* model, const isgan_image* image, double* p_cover,
                               double* p_stego) {
  if (!model || !image) return arg_error("isgan_steganalyze: NULL argument");
  if (!model->ckpt.steganalyzer) return arg_error("isgan_steganalyze: model has no steganalyzer");
  return guarded([&] {
    auto [pc, ps] = net::steganalyze(as_rgb(image->image), *model->ckpt.steganalyzer);
    if (p_cover) *p_cover = pc;
    if (p_stego) *p_stego = ps;
  });
}

isgan_status isgan_train_config_new(isgan_train_config** out) {
  if (!out) return arg_error("isgan_train_config_new: NULL out");
  *out = new isgan_train_config;
  return ISGAN_OK;
}

isgan_status isgan_train_config_set(isgan_train_config* config, const char* key, double value) {
  if (!config || !key) return arg_error("isgan_train_config_set: NULL argument");
  static const char* known[] = {"epochs",        "batch_size",     "lr",
                                "lr_decay_start", "lr_decay_factor", "lr_decay_interval",
                                "alpha",         "beta",           "gamma",
                                "adv_weight",    "weight_decay",   "steganalyzer_lr",
                                "label_flip",    "mse_only",       "seed",
                                "image_size",    "split_fraction"};
  for (const char* k : known) {
    if (std::string(key) == k) {
      config->values[key] = value;
      return ISGAN_OK;
    }
  }
  return arg_error(std::string("isgan_train_config_set: unknown key '") + key + "'");
}

void isgan_train_config_free(isgan_train_config* config) { delete config; }

isgan_status isgan_train(const char* data_dir, const isgan_train_config* config, int adversarial,
                         const char* checkpoint_out, const char* history_csv_out) {
  if (!data_dir || !checkpoint_out) return arg_error("isgan_train: NULL argument");
  return guarded([&] {
    train::TrainConfig cfg = to_train_config(config);
    cfg.validate();
    const int size = static_cast<int>(cfg_get(config, "image_size", 64));
    const double split = cfg_get(config, "split_fraction", 0.8);
    auto splits = data::scan_dataset(data_dir, size, size, cfg.seed, split);
    train::Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.epoch = static_cast<uint32_t>(cfg.epochs);
    ckpt.encoder = net::build_encoder<float>(cfg.seed);
    ckpt.decoder = net::build_decoder<float>(cfg.seed + 1);
    train::History history;
    if (adversarial) {
      ckpt.steganalyzer = net::build_steganalyzer<float>(cfg.seed + 2);
      train::IsganTrainer trainer(*ckpt.encoder, *ckpt.decoder, *ckpt.steganalyzer, cfg);
      history = trainer.run(splits.train);
      ckpt.encoder_opt = std::make_unique<train::Optimizer<float>>(trainer.encoder_optimizer());
      ckpt.decoder_opt = std::make_unique<train::Optimizer<float>>(trainer.decoder_optimizer());
      ckpt.steganalyzer_opt = std::make_unique<train::Optimizer<float>>(trainer.steganalyzer_optimizer());
    } else {
      train::BasicTrainer trainer(*ckpt.encoder, *ckpt.decoder, cfg);
      history = trainer.run(splits.train);
      ckpt.encoder_opt = std::make_unique<train::Optimizer<float>>(trainer.encoder_optimizer());
      ckpt.decoder_opt = std::make_unique<train::Optimizer<float>>(trainer.decoder_optimizer());
    }
    train::save_checkpoint(ckpt, checkpoint_out);
    if (history_csv_out) train::write_history_csv(history, history_csv_out);
  });
}

isgan_status isgan_evaluate(const char* data_dir, const isgan_train_config* config, const char* checkpoint,
                            const char* csv_out, const char* json_out) {
  if (!data_dir || !checkpoint) return arg_error("isgan_evaluate: NULL argument");
  return guarded([&] {
    auto ckpt = train::load_checkpoint(checkpoint);
    if (!ckpt.encoder || !ckpt.decoder)
      fail(ErrorCode::BadArgument, "isgan_evaluate: checkpoint lacks encoder/decoder");
    const int size = static_cast<int>(cfg_get(config, "image_size", 64));
    const double split = cfg_get(config, "split_fraction", 0.8);
    const uint64_t seed = static_cast<uint64_t>(cfg_get(config, "seed", 0.0));
    auto splits = data::scan_dataset(data_dir, size, size, seed, split);
    auto report = eval::evaluate_quality(*ckpt.encoder, *ckpt.decoder, splits.val, checkpoint);
    if (csv_out) eval::write_quality_csv(report, csv_out);
    if (json_out) eval::write_quality_json(report, json_out);
  });
}

isgan_status isgan_grad_check(char* buf, size_t buf_len, double* max_rel_error) {
  return guarded([&] {
    auto results = check::run_layer_suite(0);
    std::ostringstream report;
    double worst = 0;
    bool ok = true;
    for (const auto& r : results) {
      report << r.name << ": max_rel_error=" << r.max_rel_error << " tol=" << r.tolerance << ' '
             << (r.passed ? "PASS" : "FAIL") << '\n';
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
    }
    if (buf && buf_len > 0) std::snprintf(buf, buf_len, "%s", report.str().c_str());
    if (max_rel_error) *max_rel_error = worst;
    if (!ok) fail(ErrorCode::NonFiniteLoss, "gradient check failed:\n" + report.str());
  });
}

}  // extern "C"
