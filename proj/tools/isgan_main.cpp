// Command-line front end; all work goes through the C API in isgan.h.
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "isgan.h"

namespace {

int runtime_fail(isgan_status status) {
  std::fprintf(stderr, "error (%s): %s\n", isgan_status_name(status), isgan_last_error());
  return 1;
}

#define CHECK(call)                         \
  do {                                      \
    isgan_status status__ = (call);         \
    if (status__ != ISGAN_OK) return runtime_fail(status__); \
  } while (0)

struct ModelHandle {
  isgan_model* m = nullptr;
  ~ModelHandle() { isgan_model_free(m); }
};

struct ImageHandle {
  isgan_image* im = nullptr;
  ~ImageHandle() { isgan_image_free(im); }
};

struct ConfigHandle {
  isgan_train_config* c = nullptr;
  ConfigHandle() { isgan_train_config_new(&c); }
  ~ConfigHandle() { isgan_train_config_free(c); }
};

/// Falls back to $ISGAN_MODEL_DIR/model.isgn when --model was not given.
std::string resolve_model_path(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* dir = std::getenv("ISGAN_MODEL_DIR")) return std::string(dir) + "/model.isgn";
  return "";
}

struct TrainFlags {
  double epochs = -1, batch_size = -1, lr = -1, alpha = -1, beta = -1, gamma = -1;
  double adv_weight = -1, weight_decay = -1, steganalyzer_lr = -1, seed = -1;
  double image_size = -1, split_fraction = -1;
  double lr_decay_start = -1, lr_decay_factor = -1, lr_decay_interval = -1;
  bool no_label_flip = false, mse_only = false;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "batch size");
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--alpha", alpha, "SSIM vs MS-SSIM balance");
    cmd->add_option("--beta", beta, "MSE term weight");
    cmd->add_option("--gamma", gamma, "secret-loss weight");
    cmd->add_option("--adv-weight", adv_weight, "adversarial term weight");
    cmd->add_option("--weight-decay", weight_decay, "steganalyzer L2 weight decay");
    cmd->add_option("--steganalyzer-lr", steganalyzer_lr, "steganalyzer learning rate");
    cmd->add_option("--lr-decay-start", lr_decay_start, "first decay epoch");
    cmd->add_option("--lr-decay-factor", lr_decay_factor, "decay multiplier");
    cmd->add_option("--lr-decay-interval", lr_decay_interval, "epochs between decays");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--image-size", image_size, "square training size in pixels");
    cmd->add_option("--split", split_fraction, "train split fraction");
    cmd->add_flag("--no-label-flip", no_label_flip, "disable label flipping in the adversarial term");
    cmd->add_flag("--mse-only", mse_only, "train with plain MSE instead of the mixed loss");
  }

  int apply(isgan_train_config* c) const {
    auto set = [&](const char* key, double v) { return v >= 0 ? isgan_train_config_set(c, key, v) : ISGAN_OK; };
    CHECK(set("epochs", epochs));
    CHECK(set("batch_size", batch_size));
    CHECK(set("lr", lr));
    CHECK(set("alpha", alpha));
    CHECK(set("beta", beta));
    CHECK(set("gamma", gamma));
    CHECK(set("adv_weight", adv_weight));
    CHECK(set("weight_decay", weight_decay));
    CHECK(set("steganalyzer_lr", steganalyzer_lr));
    CHECK(set("lr_decay_start", lr_decay_start));
    CHECK(set("lr_decay_factor", lr_decay_factor));
    CHECK(set("lr_decay_interval", lr_decay_interval));
    CHECK(set("seed", seed));
    CHECK(set("image_size", image_size));
    CHECK(set("split_fraction", split_fraction));
    if (no_label_flip) CHECK(isgan_train_config_set(c, "label_flip", 0));
    if (mse_only) CHECK(isgan_train_config_set(c, "mse_only", 1));
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isgan: hide gray images inside the luminance channel of color covers"};
  app.require_subcommand(1);

  std::string data_dir, model_path, out_path, history_path;
  std::string cover_path, secret_path, stego_path, image_path, csv_path, json_path;
  bool adversarial = false;
  TrainFlags flags;

  auto* train = app.add_subcommand("train", "train encoder/decoder (optionally adversarial)");
  train->add_option("--data", data_dir, "directory of PNG images")->required();
  train->add_option("--out", out_path, "output checkpoint path")->required();
  train->add_option("--history", history_path, "per-epoch history CSV");
  train->add_flag("--adversarial", adversarial, "train with the steganalyzer adversary");
  flags.add_options(train);

  auto* hide = app.add_subcommand("hide", "embed a gray secret into a cover PNG");
  hide->add_option("--cover", cover_path, "cover PNG")->required();
  hide->add_option("--secret", secret_path, "secret PNG (gray or color; luma is used)")->required();
  hide->add_option("--model", model_path, "checkpoint (default: $ISGAN_MODEL_DIR/model.isgn)");
  hide->add_option("--out", out_path, "output stego PNG")->required();

  auto* reveal = app.add_subcommand("reveal", "recover the secret from a stego PNG");
  reveal->add_option("--stego", stego_path, "stego PNG")->required();
  reveal->add_option("--model", model_path, "checkpoint (default: $ISGAN_MODEL_DIR/model.isgn)");
  reveal->add_option("--out", out_path, "output gray PNG")->required();

  auto* evaluate = app.add_subcommand("evaluate", "hide/reveal quality over a dataset's validation split");
  evaluate->add_option("--data", data_dir, "directory of PNG images")->required();
  evaluate->add_option("--model", model_path, "checkpoint (default: $ISGAN_MODEL_DIR/model.isgn)");
  evaluate->add_option("--out-csv", csv_path, "report CSV path");
  evaluate->add_option("--out-json", json_path, "report JSON path");
  flags.add_options(evaluate);

  auto* steganalyze = app.add_subcommand("steganalyze", "print cover/stego probabilities for an image");
  steganalyze->add_option("--image", image_path, "PNG to classify")->required();
  steganalyze->add_option("--model", model_path, "checkpoint (default: $ISGAN_MODEL_DIR/model.isgn)");

  app.add_subcommand("grad-check", "finite-difference verification of every layer kind");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (app.got_subcommand("train")) {
    ConfigHandle cfg;
    if (int rc = flags.apply(cfg.c)) return rc;
    CHECK(isgan_train(data_dir.c_str(), cfg.c, adversarial ? 1 : 0, out_path.c_str(),
                      history_path.empty() ? nullptr : history_path.c_str()));
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return 0;
  }

  if (app.got_subcommand("hide") || app.got_subcommand("reveal") || app.got_subcommand("steganalyze") ||
      app.got_subcommand("evaluate")) {
    model_path = resolve_model_path(model_path);
    if (model_path.empty()) {
      std::fprintf(stderr, "error: --model is required (or set ISGAN_MODEL_DIR)\n");
      return 2;
    }
  }

  if (app.got_subcommand("hide")) {
    ModelHandle model;
    ImageHandle cover, secret, stego;
    CHECK(isgan_model_load(model_path.c_str(), &model.m));
    CHECK(isgan_image_load(cover_path.c_str(), &cover.im));
    CHECK(isgan_image_load(secret_path.c_str(), &secret.im));
    CHECK(isgan_hide(model.m, cover.im, secret.im, &stego.im));
    CHECK(isgan_image_save(stego.im, out_path.c_str()));
    std::printf("stego written to %s\n", out_path.c_str());
    return 0;
  }

  if (app.got_subcommand("reveal")) {
    ModelHandle model;
    ImageHandle stego, secret;
    CHECK(isgan_model_load(model_path.c_str(), &model.m));
    CHECK(isgan_image_load(stego_path.c_str(), &stego.im));
    CHECK(isgan_reveal(model.m, stego.im, &secret.im));
    CHECK(isgan_image_save(secret.im, out_path.c_str()));
    std::printf("revealed secret written to %s\n", out_path.c_str());
    return 0;
  }

  if (app.got_subcommand("evaluate")) {
    ConfigHandle cfg;
    if (int rc = flags.apply(cfg.c)) return rc;
    CHECK(isgan_evaluate(data_dir.c_str(), cfg.c, model_path.c_str(),
                         csv_path.empty() ? nullptr : csv_path.c_str(),
                         json_path.empty() ? nullptr : json_path.c_str()));
    std::printf("report written%s%s%s%s\n", csv_path.empty() ? "" : " to ", csv_path.c_str(),
                json_path.empty() ? "" : " and ", json_path.c_str());
    return 0;
  }

  if (app.got_subcommand("steganalyze")) {
    ModelHandle model;
    ImageHandle image;
    double p_cover = 0, p_stego = 0;
    CHECK(isgan_model_load(model_path.c_str(), &model.m));
    CHECK(isgan_image_load(image_path.c_str(), &image.im));
    CHECK(isgan_steganalyze(model.m, image.im, &p_cover, &p_stego));
    std::printf("p(cover)=%.6f p(stego)=%.6f\n", p_cover, p_stego);
    return 0;
  }

  if (app.got_subcommand("grad-check")) {
    char report[8192];
    double worst = 0;
    isgan_status status = isgan_grad_check(report, sizeof report, &worst);
    std::fputs(report, stdout);
    if (status != ISGAN_OK) {
      std::fprintf(stderr, "error (%s): gradient check failed (worst relative error %g)\n",
                   isgan_status_name(status), worst);
      return 1;
    }
    std::printf("all gradient checks passed (worst relative error %g)\n", worst);
    return 0;
  }

  return 2;
}
