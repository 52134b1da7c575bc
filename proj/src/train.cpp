#include "isgan/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace isgan::train {

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) fail(ErrorCode::BadArgument, "lr_schedule: epoch must be >= 0");
  if (epoch < cfg.lr_decay_start_epoch) return cfg.lr_initial;
  int k = (epoch - cfg.lr_decay_start_epoch) / cfg.lr_decay_interval + 1;
  return cfg.lr_initial * std::pow(cfg.lr_decay_factor, k);
}

namespace detail {

YcbcrBatch split_ycbcr(const Tensor<float>& rgb) {
  const auto& m = img::ColorMatrix::bt601();
  const int n = rgb.batch(), h = rgb.height(), w = rgb.width();
  if (rgb.channels() != 3) fail(ErrorCode::ShapeMismatch, "split_ycbcr: expected 3 channels");
  YcbcrBatch out{Tensor<float>(n, 1, h, w), Tensor<float>(n, 1, h, w), Tensor<float>(n, 1, h, w)};
  const size_t hw = static_cast<size_t>(h) * w;
  for (int bn = 0; bn < n; ++bn) {
    const float* r = rgb.plane(bn, 0);
    const float* g = rgb.plane(bn, 1);
    const float* b = rgb.plane(bn, 2);
    float* planes[3] = {out.y.plane(bn, 0), out.cb.plane(bn, 0), out.cr.plane(bn, 0)};
    for (int ch = 0; ch < 3; ++ch) {
      const float c0 = static_cast<float>(m.forward[ch][0]);
      const float c1 = static_cast<float>(m.forward[ch][1]);
      const float c2 = static_cast<float>(m.forward[ch][2]);
      const float off = static_cast<float>(m.forward_offset[ch]);
      for (size_t i = 0; i < hw; ++i)
        planes[ch][i] = std::min(1.0f, std::max(0.0f, c0 * r[i] + c1 * g[i] + c2 * b[i] + off));
    }
  }
  return out;
}

}  // namespace detail

namespace {

ad::Ref<float> pair_loss(const ad::Ref<float>& target, const ad::Ref<float>& pred, LossMode mode,
                         const metrics::LossWeights& w, const metrics::SsimConfig& cfg) {
  if (mode == LossMode::MseOnly) return metrics::mse_var(target, pred);
  return metrics::image_loss_var(target, pred, w, cfg);
}

void require_finite(double v, const char* what, int epoch, size_t batch_start) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite " << what << " at epoch " << epoch << ", batch offset " << batch_start << " (value "
        << v << ")";
    fail(ErrorCode::NonFiniteLoss, msg.str());
  }
}

struct StatAccum {
  double loss = 0, loss_cover = 0, loss_secret = 0;
  double stego_ssim = 0, stego_psnr = 0, secret_ssim = 0, secret_psnr = 0;
  long n = 0;

  void add(int count, double l, double lc, double ls, const Tensor<float>& cover_y,
           const Tensor<float>& stego_y, const Tensor<float>& secret, const Tensor<float>& revealed,
           const metrics::SsimConfig& scfg) {
    loss += l * count;
    loss_cover += lc * count;
    loss_secret += ls * count;
    stego_ssim += metrics::ssim(cover_y, stego_y, scfg) * count;
    stego_psnr += std::min(metrics::psnr(cover_y, stego_y), 200.0) * count;
    secret_ssim += metrics::ssim(secret, revealed, scfg) * count;
    secret_psnr += std::min(metrics::psnr(secret, revealed), 200.0) * count;
    n += count;
  }

  EpochStats finish(int epoch, double lr) const {
    EpochStats s;
    s.epoch = epoch;
    s.lr = lr;
    double d = n > 0 ? static_cast<double>(n) : 1.0;
    s.loss = loss / d;
    s.loss_cover = loss_cover / d;
    s.loss_secret = loss_secret / d;
    s.stego_ssim = stego_ssim / d;
    s.stego_psnr = stego_psnr / d;
    s.secret_ssim = secret_ssim / d;
    s.secret_psnr = secret_psnr / d;
    return s;
  }
};

}  // namespace

BasicTrainer::BasicTrainer(net::Network<float>& enc, net::Network<float>& dec, TrainConfig cfg)
    : enc_(enc), dec_(dec), cfg_(std::move(cfg)) {
  cfg_.validate();
}

EpochStats BasicTrainer::run_epoch(const data::DatasetManifest& dataset, int epoch) {
  if (dataset.pairs.empty()) fail(ErrorCode::EmptyDataset, "train_basic: empty dataset");
  const auto scfg = metrics::SsimConfig().for_size(dataset.target_h, dataset.target_w);
  const double lr = lr_schedule(epoch, cfg_);
  const auto order = data::epoch_order(dataset, epoch);
  StatAccum acc;
  for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    auto batch = data::next_batch(dataset, order, start, cfg_.batch_size);
    auto ycc = detail::split_ycbcr(batch.covers);
    auto cover_y = ad::constant(ycc.y);
    auto secret = ad::constant(batch.secrets);
    auto stego_y = net::encode_batch(enc_, cover_y, secret, true);
    auto revealed = dec_.forward(stego_y, true);
    auto lc = pair_loss(cover_y, stego_y, cfg_.loss_mode, cfg_.loss_weights, scfg);
    auto ls = pair_loss(secret, revealed, cfg_.loss_mode, cfg_.loss_weights, scfg);
    auto loss = ad::add(lc, ad::scale(ls, static_cast<float>(cfg_.loss_weights.gamma)));
    require_finite(loss->value.v[0], "loss", epoch, start);
    enc_.store.zero_grad();
    dec_.store.zero_grad();
    ad::backward(loss);
    enc_opt_.step(enc_.store, lr);
    dec_opt_.step(dec_.store, lr);
    acc.add(batch.size(), loss->value.v[0], lc->value.v[0], ls->value.v[0], ycc.y, stego_y->value,
            batch.secrets, revealed->value, scfg);
  }
  return acc.finish(epoch, lr);
}

History BasicTrainer::run(const data::DatasetManifest& dataset) {
  History history;
  for (int e = 0; e < cfg_.epochs; ++e) history.push_back(run_epoch(dataset, e));
  return history;
}

IsganTrainer::IsganTrainer(net::Network<float>& enc, net::Network<float>& dec, net::Network<float>& steg,
                           TrainConfig cfg)
    : enc_(enc), dec_(dec), steg_(steg), cfg_(std::move(cfg)), steg_opt_(OptKind::Sgd, cfg_.weight_decay) {
  cfg_.validate();
}

EpochStats IsganTrainer::run_epoch(const data::DatasetManifest& dataset, int epoch) {
  if (dataset.pairs.empty()) fail(ErrorCode::EmptyDataset, "train_isgan: empty dataset");
  net::require_steganalyzer_size<float>(dataset.target_h, dataset.target_w);
  const auto scfg = metrics::SsimConfig().for_size(dataset.target_h, dataset.target_w);
  const double lr = lr_schedule(epoch, cfg_);
  const auto order_g = data::epoch_order(dataset, epoch);
  // The steganalyzer trains on its own batch stream so the generator sees
  // exactly the train_basic batch sequence.
  const auto order_d = data::epoch_order(dataset, epoch, /*salt=*/0xD15Cu);
  StatAccum acc;
  long d_correct = 0, d_total = 0;
  const int h = dataset.target_h, w = dataset.target_w;
  for (size_t start = 0; start < order_g.size(); start += cfg_.batch_size) {
    // --- steganalyzer step ---
    {
      auto d_batch = data::next_batch(dataset, order_d, start, cfg_.batch_size);
      auto ycc = detail::split_ycbcr(d_batch.covers);
      Tensor<float> stego_rgb;
      {
        ad::NoGrad ng;  // generation must not touch generator BN stats
        auto sy = net::encode_batch(enc_, ad::constant(ycc.y), ad::constant(d_batch.secrets), false);
        stego_rgb = net::merge_luma_chroma_rgb(sy, ycc.cb, ycc.cr)->value;
      }
      const int n = d_batch.size();
      Tensor<float> dx(2 * n, 3, h, w);
      std::copy(d_batch.covers.v.begin(), d_batch.covers.v.end(), dx.v.begin());
      std::copy(stego_rgb.v.begin(), stego_rgb.v.end(), dx.v.begin() + d_batch.covers.size());
      std::vector<int> labels(2 * n, 0);
      for (int i = 0; i < n; ++i) labels[n + i] = 1;  // cover=0, stego=1
      steg_.store.zero_grad();
      auto logits = steg_.forward(ad::constant(dx), true);
      auto d_loss = ad::softmax_cross_entropy(logits, labels);
      require_finite(d_loss->value.v[0], "steganalyzer loss", epoch, start);
      ad::backward(d_loss);
      steg_opt_.step(steg_.store, cfg_.steganalyzer_lr);
      for (int i = 0; i < 2 * n; ++i) {
        int pred = logits->value.at(i, 1, 0, 0) > logits->value.at(i, 0, 0, 0) ? 1 : 0;
        d_correct += pred == labels[i];
      }
      d_total += 2 * n;
    }
    // --- generator step ---
    auto batch = data::next_batch(dataset, order_g, start, cfg_.batch_size);
    auto ycc = detail::split_ycbcr(batch.covers);
    auto cover_y = ad::constant(ycc.y);
    auto secret = ad::constant(batch.secrets);
    auto stego_y = net::encode_batch(enc_, cover_y, secret, true);
    auto revealed = dec_.forward(stego_y, true);
    auto lc = pair_loss(cover_y, stego_y, cfg_.loss_mode, cfg_.loss_weights, scfg);
    auto ls = pair_loss(secret, revealed, cfg_.loss_mode, cfg_.loss_weights, scfg);
    auto loss = ad::add(lc, ad::scale(ls, static_cast<float>(cfg_.loss_weights.gamma)));
    if (cfg_.adv_weight > 0) {
      auto stego_full = net::merge_luma_chroma_rgb(stego_y, ycc.cb, ycc.cr);
      auto d_logits = steg_.forward(stego_full, false);
      std::vector<int> targets(batch.size(), cfg_.label_flip ? 0 : 1);
      auto adv = ad::softmax_cross_entropy(d_logits, targets);
      if (!cfg_.label_flip) adv = ad::scale(adv, -1.0f);  // saturating form: minimize log D(stego)
      loss = ad::add(loss, ad::scale(adv, static_cast<float>(cfg_.adv_weight)));
    }
    require_finite(loss->value.v[0], "generator loss", epoch, start);
    enc_.store.zero_grad();
    dec_.store.zero_grad();
    steg_.store.zero_grad();  // generator backward also reaches D parameters
    ad::backward(loss);
    enc_opt_.step(enc_.store, lr);
    dec_opt_.step(dec_.store, lr);
    acc.add(batch.size(), loss->value.v[0], lc->value.v[0], ls->value.v[0], ycc.y, stego_y->value,
            batch.secrets, revealed->value, scfg);
  }
  EpochStats stats = acc.finish(epoch, lr);
  stats.steganalyzer_accuracy = d_total > 0 ? static_cast<double>(d_correct) / d_total : -1;
  return stats;
}

History IsganTrainer::run(const data::DatasetManifest& dataset) {
  History history;
  for (int e = 0; e < cfg_.epochs; ++e) history.push_back(run_epoch(dataset, e));
  return history;
}

History train_basic(const data::DatasetManifest& dataset, net::Network<float>& enc,
                    net::Network<float>& dec, const TrainConfig& cfg) {
  BasicTrainer trainer(enc, dec, cfg);
  return trainer.run(dataset);
}

History train_isgan(const data::DatasetManifest& dataset, net::Network<float>& enc,
                    net::Network<float>& dec, net::Network<float>& steg, const TrainConfig& cfg) {
  IsganTrainer trainer(enc, dec, steg, cfg);
  return trainer.run(dataset);
}

void write_history_csv(const History& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write history " + path);
  out << "epoch,lr,loss,loss_cover,loss_secret,stego_ssim,stego_psnr,secret_ssim,secret_psnr,"
         "steganalyzer_accuracy\n";
  out.precision(9);
  for (const auto& s : history) {
    out << s.epoch << ',' << s.lr << ',' << s.loss << ',' << s.loss_cover << ',' << s.loss_secret << ','
        << s.stego_ssim << ',' << s.stego_psnr << ',' << s.secret_ssim << ',' << s.secret_psnr << ',';
    if (s.steganalyzer_accuracy >= 0) out << s.steganalyzer_accuracy;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'S', 'G', 'N'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void put_u8(std::ostream& o, uint8_t v) { o.write(reinterpret_cast<const char*>(&v), 1); }

void put_string(std::ostream& o, const std::string& s) {
  put_u32(o, static_cast<uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& o, const Tensor<float>& t) {
  for (int d : t.shape) put_u32(o, static_cast<uint32_t>(d));
  o.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * 4));
}

struct Reader {
  std::istream& in;
  const std::string& path;

  void need(bool ok, const char* what) {
    if (!ok || !in)
      fail(ErrorCode::Io, path + ": truncated or corrupt checkpoint (" + what + ")");
  }
  uint32_t u32() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    need(static_cast<bool>(in), "u32");
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    need(static_cast<bool>(in), "u64");
    return v;
  }
  double f64() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    need(static_cast<bool>(in), "f64");
    return v;
  }
  uint8_t u8() {
    uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    need(static_cast<bool>(in), "u8");
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n < (1u << 20), "string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    need(static_cast<bool>(in), "string");
    return s;
  }
  Tensor<float> tensor() {
    std::array<int, 4> dims;
    for (auto& d : dims) {
      uint32_t v = u32();
      need(v <= (1u << 24), "tensor dim");
      d = static_cast<int>(v);
    }
    Tensor<float> t(dims[0], dims[1], dims[2], dims[3]);
    in.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * 4));
    need(static_cast<bool>(in), "tensor data");
    return t;
  }
};

void put_config(std::ostream& o, const TrainConfig& c) {
  put_u32(o, 13);  // field count
  put_f64(o, c.epochs);
  put_f64(o, c.batch_size);
  put_f64(o, c.lr_initial);
  put_f64(o, c.lr_decay_start_epoch);
  put_f64(o, c.lr_decay_factor);
  put_f64(o, c.lr_decay_interval);
  put_f64(o, c.loss_weights.alpha);
  put_f64(o, c.loss_weights.beta);
  put_f64(o, c.loss_weights.gamma);
  put_f64(o, c.adv_weight);
  put_f64(o, c.weight_decay);
  put_f64(o, c.steganalyzer_lr);
  put_f64(o, (c.label_flip ? 1.0 : 0.0) + (c.loss_mode == LossMode::MseOnly ? 2.0 : 0.0));
  put_u64(o, c.seed);
}

TrainConfig read_config(Reader& r) {
  TrainConfig c;
  uint32_t n = r.u32();
  r.need(n == 13, "config field count");
  c.epochs = static_cast<int>(r.f64());
  c.batch_size = static_cast<int>(r.f64());
  c.lr_initial = r.f64();
  c.lr_decay_start_epoch = static_cast<int>(r.f64());
  c.lr_decay_factor = r.f64();
  c.lr_decay_interval = static_cast<int>(r.f64());
  c.loss_weights.alpha = r.f64();
  c.loss_weights.beta = r.f64();
  c.loss_weights.gamma = r.f64();
  c.adv_weight = r.f64();
  c.weight_decay = r.f64();
  c.steganalyzer_lr = r.f64();
  double flags = r.f64();
  c.label_flip = std::fmod(flags, 2.0) >= 1.0;
  c.loss_mode = flags >= 2.0 ? LossMode::MseOnly : LossMode::Mixed;
  c.seed = r.u64();
  return c;
}

void put_network(std::ostream& o, const net::Network<float>& network,
                 const Optimizer<float>* opt) {
  put_string(o, net::kind_name(network.kind));
  const auto& params = network.store.params();
  put_u32(o, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(o, p.name);
    put_tensor(o, p.node->value);
  }
  const auto& buffers = network.store.buffers();
  put_u32(o, static_cast<uint32_t>(buffers.size()));
  for (const auto& b : buffers) {
    put_string(o, b.name);
    put_tensor(o, *b.tensor);
  }
  put_u8(o, opt ? 1 : 0);
  if (opt) {
    put_u8(o, opt->kind() == OptKind::Adam ? 0 : 1);
    put_f64(o, opt->weight_decay());
    put_u64(o, static_cast<uint64_t>(opt->step_count()));
    put_u32(o, static_cast<uint32_t>(opt->slots().size()));
    for (const auto& s : opt->slots()) {
      put_u8(o, s.m.empty() ? 0 : 1);
      if (!s.m.empty()) put_tensor(o, s.m);
      put_u8(o, s.v.empty() ? 0 : 1);
      if (!s.v.empty()) put_tensor(o, s.v);
    }
  }
}

std::pair<std::unique_ptr<net::Network<float>>, std::unique_ptr<Optimizer<float>>> read_network(
    Reader& r) {
  std::string kind = r.str();
  std::unique_ptr<net::Network<float>> network;
  if (kind == "encoder")
    network = net::build_encoder<float>(0);
  else if (kind == "decoder")
    network = net::build_decoder<float>(0);
  else if (kind == "steganalyzer")
    network = net::build_steganalyzer<float>(0);
  else
    fail(ErrorCode::VersionMismatch, "unknown network kind in checkpoint: " + kind);
  uint32_t n_params = r.u32();
  r.need(n_params == network->store.params().size(), "parameter count");
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    Tensor<float> t = r.tensor();
    auto& p = network->store.params()[i];
    if (p.name != name || !p.node->value.same_shape(t))
      fail(ErrorCode::VersionMismatch, "checkpoint parameter mismatch at " + name);
    p.node->value = std::move(t);
  }
  uint32_t n_buffers = r.u32();
  r.need(n_buffers == network->store.buffers().size(), "buffer count");
  for (uint32_t i = 0; i < n_buffers; ++i) {
    std::string name = r.str();
    Tensor<float> t = r.tensor();
    auto& b = network->store.buffers()[i];
    if (b.name != name || !b.tensor->same_shape(t))
      fail(ErrorCode::VersionMismatch, "checkpoint buffer mismatch at " + name);
    *b.tensor = std::move(t);
  }
  std::unique_ptr<Optimizer<float>> opt;
  if (r.u8()) {
    OptKind kind_opt = r.u8() == 0 ? OptKind::Adam : OptKind::Sgd;
    double wd = r.f64();
    opt = std::make_unique<Optimizer<float>>(kind_opt, wd);
    opt->set_step_count(static_cast<long>(r.u64()));
    uint32_t n_slots = r.u32();
    opt->slots().resize(n_slots);
    for (uint32_t i = 0; i < n_slots; ++i) {
      if (r.u8()) opt->slots()[i].m = r.tensor();
      if (r.u8()) opt->slots()[i].v = r.tensor();
    }
  }
  return {std::move(network), std::move(opt)};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, ckpt.epoch);
  put_config(out, ckpt.config);
  uint32_t n = (ckpt.encoder ? 1 : 0) + (ckpt.decoder ? 1 : 0) + (ckpt.steganalyzer ? 1 : 0);
  put_u32(out, n);
  if (ckpt.encoder) put_network(out, *ckpt.encoder, ckpt.encoder_opt.get());
  if (ckpt.decoder) put_network(out, *ckpt.decoder, ckpt.decoder_opt.get());
  if (ckpt.steganalyzer) put_network(out, *ckpt.steganalyzer, ckpt.steganalyzer_opt.get());
  if (!out) fail(ErrorCode::Io, "write error on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::FileNotFound, "cannot open checkpoint " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::BadMagic, path + ": not an ISGN checkpoint");
  Reader r{in, path};
  uint32_t version = r.u32();
  if (version != kVersion)
    fail(ErrorCode::VersionMismatch,
         path + ": checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kVersion));
  Checkpoint ckpt;
  ckpt.epoch = r.u32();
  ckpt.config = read_config(r);
  uint32_t n = r.u32();
  r.need(n <= 3, "network count");
  for (uint32_t i = 0; i < n; ++i) {
    auto [network, opt] = read_network(r);
    switch (network->kind) {
      case net::NetKind::Encoder:
        ckpt.encoder = std::move(network);
        ckpt.encoder_opt = std::move(opt);
        break;
      case net::NetKind::Decoder:
        ckpt.decoder = std::move(network);
        ckpt.decoder_opt = std::move(opt);
        break;
      case net::NetKind::Steganalyzer:
        ckpt.steganalyzer = std::move(network);
        ckpt.steganalyzer_opt = std::move(opt);
        break;
    }
  }
  return ckpt;
}

}  // namespace isgan::train
