#include <doctest.h>

#include "isgan/networks.hpp"
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

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("encoder layer widths follow the channel ladder") {
  auto enc = net::build_encoder<float>(0);
  ad::NoGrad ng;
  auto shapes = enc->stack.trace(ad::constant(Tensor<float>(1, 2, 64, 64)), false);
  const int want[] = {16, 32, 64, 128, 256, 128, 64, 32, 16, 1, 1, 1};
  REQUIRE(shapes.size() == 12);
  for (size_t i = 0; i < shapes.size(); ++i) {
    CHECK(shapes[i][1] == want[i]);
    CHECK(shapes[i][2] == 64);  // spatial size never changes in the encoder
    CHECK(shapes[i][3] == 64);
  }
}

TEST_CASE("decoder layer widths") {
  auto dec = net::build_decoder<float>(0);
  ad::NoGrad ng;
  auto shapes = dec->stack.trace(ad::constant(Tensor<float>(1, 1, 64, 64)), false);
  const int want[] = {32, 64, 128, 64, 32, 1, 1};
  REQUIRE(shapes.size() == 7);
  for (size_t i = 0; i < shapes.size(); ++i) {
    CHECK(shapes[i][1] == want[i]);
    CHECK(shapes[i][2] == 64);
  }
}

TEST_CASE("steganalyzer shapes, including the 2688-wide SPP output") {
  auto steg = net::build_steganalyzer<float>(0);
  ad::NoGrad ng;
  auto shapes = steg->stack.trace(ad::constant(Tensor<float>(1, 3, 256, 256)), false);
  REQUIRE(shapes.size() == 8);
  CHECK(shapes[0] == std::array<int, 4>{1, 8, 128, 128});
  CHECK(shapes[1] == std::array<int, 4>{1, 16, 64, 64});
  CHECK(shapes[2] == std::array<int, 4>{1, 32, 32, 32});
  CHECK(shapes[3] == std::array<int, 4>{1, 64, 16, 16});
  CHECK(shapes[4] == std::array<int, 4>{1, 128, 8, 8});
  CHECK(shapes[5] == std::array<int, 4>{1, 2688, 1, 1});  // 128 * (1 + 4 + 16)
  CHECK(shapes[6] == std::array<int, 4>{1, 128, 1, 1});
  CHECK(shapes[7] == std::array<int, 4>{1, 2, 1, 1});
}

TEST_CASE("spp makes the steganalyzer size-agnostic") {
  auto steg = net::build_steganalyzer<float>(0);
  ad::NoGrad ng;
  for (int size : {32, 64, 96}) {
    auto logits = steg->forward(ad::constant(Tensor<float>(2, 3, size, size)), false);
    CHECK(logits->value.shape == std::array<int, 4>{2, 2, 1, 1});
  }
}

TEST_CASE("hide keeps the cover chroma bit-exact") {
  auto enc = net::build_encoder<float>(1);
  auto cover = testutil::synth_rgb(20, 48, 48);
  auto secret = testutil::synth_gray(21, 48, 48);
  auto stego = net::hide_ycbcr(cover, secret, *enc);
  auto cover_ycc = img::rgb_to_ycbcr(cover);
  CHECK(stego.space == img::ColorSpace::YCbCr);
  CHECK(stego.planes[1] == cover_ycc.planes[1]);
  CHECK(stego.planes[2] == cover_ycc.planes[2]);
  CHECK(stego.planes[0] != cover_ycc.planes[0]);

  SUBCASE("chroma planes survive a png save byte-for-byte") {
    testutil::TempDir tmp("chroma");
    for (int c : {1, 2}) {
      img::GrayImage a{48, 48, cover_ycc.planes[c]};
      img::GrayImage b{48, 48, stego.planes[c]};
      img::save_image(a, tmp.file("cover.png"));
      img::save_image(b, tmp.file("stego.png"));
      CHECK(testutil::read_bytes(tmp.file("cover.png")) == testutil::read_bytes(tmp.file("stego.png")));
    }
  }
}

TEST_CASE("hide rejects mismatched dimensions") {
  auto enc = net::build_encoder<float>(1);
  auto cover = testutil::synth_rgb(22, 32, 32);
  auto secret = testutil::synth_gray(23, 16, 16);
  CHECK(code_of([&] { net::hide(cover, secret, *enc); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("encoder output and revealed secret stay in [0,1]") {
  auto enc = net::build_encoder<float>(2);
  auto dec = net::build_decoder<float>(3);
  auto cover = testutil::synth_rgb(24, 32, 32);
  auto secret = testutil::synth_gray(25, 32, 32);
  auto stego = net::hide(cover, secret, *enc);
  for (const auto& p : stego.planes)
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  auto revealed = net::reveal(stego, *dec);
  CHECK(revealed.width == 32);
  CHECK(revealed.height == 32);
  for (double v : revealed.plane) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("steganalyze returns a probability pair") {
  auto steg = net::build_steganalyzer<float>(4);
  auto [pc, ps] = net::steganalyze(testutil::synth_rgb(26, 32, 32), *steg);
  CHECK(pc >= 0.0);
  CHECK(ps >= 0.0);
  CHECK(pc + ps == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("steganalyzer input size limits") {
  auto steg = net::build_steganalyzer<float>(4);
  CHECK(code_of([&] { net::steganalyze(testutil::synth_rgb(27, 16, 16), *steg); }) ==
        ErrorCode::ImageTooSmall);
  CHECK(code_of([&] { net::steganalyze(testutil::synth_rgb(28, 34, 34), *steg); }) ==
        ErrorCode::ImageTooSmall);
}

TEST_CASE("initialization is deterministic in the seed") {
  auto a = net::build_encoder<float>(7);
  auto b = net::build_encoder<float>(7);
  auto c = net::build_encoder<float>(8);
  REQUIRE(a->store.params().size() == b->store.params().size());
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a->store.params().size(); ++i) {
    all_equal = all_equal && a->store.params()[i].node->value.v == b->store.params()[i].node->value.v;
    any_diff = any_diff || a->store.params()[i].node->value.v != c->store.params()[i].node->value.v;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

}  // TEST_SUITE
