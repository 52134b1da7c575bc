#include <doctest.h>

#include <cmath>
#include <fstream>

#include "isgan/train.hpp"
#include "testutil.hpp"

using namespace isgan;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

std::vector<float> param_values(const net::Network<float>& n) {
  std::vector<float> all;
  for (const auto& p : n.store.params()) all.insert(all.end(), p.node->value.v.begin(), p.node->value.v.end());
  return all;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("lr schedule halves every interval after the decay start") {
  train::TrainConfig cfg;  // lr 1e-4, decay from epoch 20 every 10 epochs
  CHECK(train::lr_schedule(0, cfg) == 1e-4);
  CHECK(train::lr_schedule(19, cfg) == 1e-4);
  CHECK(train::lr_schedule(20, cfg) == doctest::Approx(5e-5));
  CHECK(train::lr_schedule(29, cfg) == doctest::Approx(5e-5));
  CHECK(train::lr_schedule(30, cfg) == doctest::Approx(2.5e-5));
  CHECK(train::lr_schedule(45, cfg) == doctest::Approx(1.25e-5));
  CHECK(code_of([&] { train::lr_schedule(-1, cfg); }) == ErrorCode::BadArgument);
}

TEST_CASE("adam step matches the hand-computed update") {
  nn::ParameterStore<float> store;
  auto p = store.add_param("p", Tensor<float>(1, 1, 1, 1));
  p->value.v[0] = 1.0f;
  p->grad = Tensor<float>::zeros_like(p->value);
  p->grad.v[0] = 0.5f;
  train::Optimizer<float> opt(train::OptKind::Adam);
  opt.step(store, 0.1);
  // m=0.05, v=2.5e-4; bias-corrected mhat=0.5, vhat=0.25
  CHECK(p->value.v[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("sgd momentum accumulates velocity") {
  nn::ParameterStore<float> store;
  auto p = store.add_param("p", Tensor<float>(1, 1, 1, 1));
  p->value.v[0] = 1.0f;
  train::Optimizer<float> opt(train::OptKind::Sgd);
  p->grad = Tensor<float>::zeros_like(p->value);
  p->grad.v[0] = 0.5f;
  opt.step(store, 0.1);
  CHECK(p->value.v[0] == doctest::Approx(0.95).epsilon(1e-6));
  p->grad.v[0] = 0.5f;
  opt.step(store, 0.1);  // velocity 0.9*0.5 + 0.5 = 0.95
  CHECK(p->value.v[0] == doctest::Approx(0.95 - 0.095).epsilon(1e-6));
}

TEST_CASE("weight decay adds an L2 gradient term") {
  nn::ParameterStore<float> store;
  auto p = store.add_param("p", Tensor<float>(1, 1, 1, 1));
  p->value.v[0] = 2.0f;
  p->grad = Tensor<float>::zeros_like(p->value);
  train::Optimizer<float> opt(train::OptKind::Sgd, 0.1);
  opt.step(store, 0.1);  // g = 0 + 0.1*2 = 0.2
  CHECK(p->value.v[0] == doctest::Approx(2.0 - 0.02).epsilon(1e-6));
}

TEST_CASE("checkpoint round trip is byte-identical") {
  testutil::TempDir tmp("ckpt");
  train::Checkpoint ck;
  ck.epoch = 3;
  ck.config.seed = 11;
  ck.config.lr_initial = 2e-4;
  ck.encoder = net::build_encoder<float>(11);
  ck.decoder = net::build_decoder<float>(12);
  ck.steganalyzer = net::build_steganalyzer<float>(13);
  train::save_checkpoint(ck, tmp.file("a.isgn"));

  auto back = train::load_checkpoint(tmp.file("a.isgn"));
  CHECK(back.epoch == 3);
  CHECK(back.config.seed == 11);
  CHECK(back.config.lr_initial == 2e-4);
  REQUIRE(back.encoder);
  REQUIRE(back.decoder);
  REQUIRE(back.steganalyzer);
  for (size_t i = 0; i < ck.encoder->store.params().size(); ++i)
    CHECK(back.encoder->store.params()[i].node->value.v == ck.encoder->store.params()[i].node->value.v);

  train::save_checkpoint(back, tmp.file("b.isgn"));
  CHECK(testutil::read_bytes(tmp.file("a.isgn")) == testutil::read_bytes(tmp.file("b.isgn")));
}

TEST_CASE("checkpoint rejects bad files") {
  testutil::TempDir tmp("ckpt_err");
  CHECK(code_of([&] { train::load_checkpoint(tmp.file("missing.isgn")); }) == ErrorCode::FileNotFound);
  {
    std::ofstream f(tmp.file("junk.isgn"), std::ios::binary);
    f << "JUNKJUNKJUNK";
  }
  CHECK(code_of([&] { train::load_checkpoint(tmp.file("junk.isgn")); }) == ErrorCode::BadMagic);

  train::Checkpoint ck;
  ck.encoder = net::build_encoder<float>(1);
  train::save_checkpoint(ck, tmp.file("ok.isgn"));
  auto bytes = testutil::read_bytes(tmp.file("ok.isgn"));
  SUBCASE("wrong version") {
    bytes[4] = 99;  // version field follows the 4-byte magic
    std::ofstream(tmp.file("ver.isgn"), std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    CHECK(code_of([&] { train::load_checkpoint(tmp.file("ver.isgn")); }) == ErrorCode::VersionMismatch);
  }
  SUBCASE("truncated") {
    std::ofstream(tmp.file("trunc.isgn"), std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 2));
    CHECK(code_of([&] { train::load_checkpoint(tmp.file("trunc.isgn")); }) == ErrorCode::Io);
  }
}

TEST_CASE("basic training is deterministic and decreases the loss") {
  testutil::TempDir tmp("train_basic");
  testutil::make_dataset(tmp.path().string(), 8, 16, 16, 21);
  auto m = data::scan_dataset(tmp.path().string(), 16, 16, 3, 1.0).train;
  train::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 3;

  auto run = [&](train::History* hist) {
    auto enc = net::build_encoder<float>(cfg.seed);
    auto dec = net::build_decoder<float>(cfg.seed + 1);
    *hist = train::train_basic(m, *enc, *dec, cfg);
    return param_values(*enc);
  };
  train::History h1, h2;
  auto p1 = run(&h1);
  auto p2 = run(&h2);
  CHECK(p1 == p2);  // bitwise reproducible
  REQUIRE(h1.size() == 3);
  for (size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].loss == h2[i].loss);
    CHECK(std::isfinite(h1[i].loss));
    CHECK(h1[i].epoch == static_cast<int>(i));
    CHECK(h1[i].steganalyzer_accuracy == -1);
  }
  CHECK(h1.back().loss < h1.front().loss);
}

TEST_CASE("mse-only loss mode trains") {
  testutil::TempDir tmp("train_mse");
  testutil::make_dataset(tmp.path().string(), 4, 16, 16, 22);
  auto m = data::scan_dataset(tmp.path().string(), 16, 16, 4, 1.0).train;
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.loss_mode = train::LossMode::MseOnly;
  auto enc = net::build_encoder<float>(1);
  auto dec = net::build_decoder<float>(2);
  auto hist = train::train_basic(m, *enc, *dec, cfg);
  CHECK(std::isfinite(hist[0].loss));
}

TEST_CASE("adversarial training with zero adv weight reproduces basic training bitwise") {
  testutil::TempDir tmp("train_adv0");
  testutil::make_dataset(tmp.path().string(), 8, 32, 32, 23);
  auto m = data::scan_dataset(tmp.path().string(), 32, 32, 5, 1.0).train;
  train::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.adv_weight = 0.0;

  auto enc_b = net::build_encoder<float>(cfg.seed);
  auto dec_b = net::build_decoder<float>(cfg.seed + 1);
  auto hb = train::train_basic(m, *enc_b, *dec_b, cfg);

  auto enc_a = net::build_encoder<float>(cfg.seed);
  auto dec_a = net::build_decoder<float>(cfg.seed + 1);
  auto steg = net::build_steganalyzer<float>(cfg.seed + 2);
  auto ha = train::train_isgan(m, *enc_a, *dec_a, *steg, cfg);

  CHECK(param_values(*enc_b) == param_values(*enc_a));
  CHECK(param_values(*dec_b) == param_values(*dec_a));
  REQUIRE(hb.size() == ha.size());
  for (size_t i = 0; i < hb.size(); ++i) {
    CHECK(hb[i].loss == ha[i].loss);
    CHECK(ha[i].steganalyzer_accuracy >= 0.0);
    CHECK(ha[i].steganalyzer_accuracy <= 1.0);
  }
}

TEST_CASE("adversarial training with a positive adv weight diverges from basic") {
  testutil::TempDir tmp("train_adv");
  testutil::make_dataset(tmp.path().string(), 4, 32, 32, 24);
  auto m = data::scan_dataset(tmp.path().string(), 32, 32, 6, 1.0).train;
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 6;
  cfg.adv_weight = 0.5;

  auto enc_b = net::build_encoder<float>(cfg.seed);
  auto dec_b = net::build_decoder<float>(cfg.seed + 1);
  train::train_basic(m, *enc_b, *dec_b, cfg);

  auto enc_a = net::build_encoder<float>(cfg.seed);
  auto dec_a = net::build_decoder<float>(cfg.seed + 1);
  auto steg = net::build_steganalyzer<float>(cfg.seed + 2);
  train::train_isgan(m, *enc_a, *dec_a, *steg, cfg);

  CHECK(param_values(*enc_b) != param_values(*enc_a));
}

TEST_CASE("history csv has one row per epoch") {
  testutil::TempDir tmp("hist");
  train::History h;
  train::EpochStats s;
  s.epoch = 0;
  s.lr = 1e-4;
  s.loss = 0.5;
  h.push_back(s);
  s.epoch = 1;
  s.steganalyzer_accuracy = 0.75;
  h.push_back(s);
  train::write_history_csv(h, tmp.file("h.csv"));
  std::ifstream in(tmp.file("h.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "epoch,lr,loss,loss_cover,loss_secret,stego_ssim,stego_psnr,secret_ssim,secret_psnr,"
        "steganalyzer_accuracy");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("empty dataset fails fast") {
  data::DatasetManifest m;
  train::TrainConfig cfg;
  cfg.epochs = 1;
  auto enc = net::build_encoder<float>(1);
  auto dec = net::build_decoder<float>(2);
  CHECK(code_of([&] { train::train_basic(m, *enc, *dec, cfg); }) == ErrorCode::EmptyDataset);
}

}  // TEST_SUITE
