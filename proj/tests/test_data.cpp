#include <doctest.h>

#include <fstream>
#include <set>

#include "isgan/data.hpp"
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

TEST_SUITE("data") {

TEST_CASE("scan_dataset splits, pairs disjointly, and is deterministic") {
  testutil::TempDir tmp("scan");
  testutil::make_dataset(tmp.path().string(), 10, 12, 12, 1);
  auto s1 = data::scan_dataset(tmp.path().string(), 16, 16, 42, 0.8);
  auto s2 = data::scan_dataset(tmp.path().string(), 16, 16, 42, 0.8);
  CHECK(s1.train.files == s2.train.files);
  CHECK(s1.val.files == s2.val.files);
  CHECK(s1.train.files.size() == 8);
  CHECK(s1.val.files.size() == 2);
  CHECK(s1.train.pairs.size() == 4);
  CHECK(s1.val.pairs.size() == 1);
  CHECK(s1.train.split == "train");
  CHECK(s1.val.split == "val");

  std::set<int> used;
  for (const auto& p : s1.train.pairs) {
    CHECK(used.insert(p.cover_index).second);  // each file in at most one pair slot
    CHECK(used.insert(p.secret_index).second);
  }

  std::set<std::string> train_set(s1.train.files.begin(), s1.train.files.end());
  for (const auto& f : s1.val.files) CHECK(train_set.count(f) == 0);

  auto s3 = data::scan_dataset(tmp.path().string(), 16, 16, 43, 0.8);
  CHECK(s3.train.files != s1.train.files);  // different seed, different shuffle
}

TEST_CASE("scan_dataset errors") {
  testutil::TempDir tmp("scan_err");
  CHECK(code_of([&] { data::scan_dataset(tmp.file("nope"), 16, 16, 0, 0.8); }) ==
        ErrorCode::FileNotFound);
  testutil::make_dataset(tmp.path().string(), 1, 8, 8, 2);
  CHECK(code_of([&] { data::scan_dataset(tmp.path().string(), 16, 16, 0, 0.8); }) ==
        ErrorCode::InsufficientImages);
  testutil::make_dataset(tmp.path().string(), 4, 8, 8, 2);
  CHECK(code_of([&] { data::scan_dataset(tmp.path().string(), 16, 16, 0, 1.5); }) ==
        ErrorCode::BadArgument);
}

TEST_CASE("epoch_order reshuffles deterministically") {
  testutil::TempDir tmp("order");
  testutil::make_dataset(tmp.path().string(), 12, 8, 8, 3);
  auto m = data::scan_dataset(tmp.path().string(), 16, 16, 5, 1.0).train;
  auto e0 = data::epoch_order(m, 0);
  auto e0b = data::epoch_order(m, 0);
  auto e1 = data::epoch_order(m, 1);
  auto e0s = data::epoch_order(m, 0, 99);
  CHECK(e0 == e0b);
  CHECK(e0 != e1);
  CHECK(e0 != e0s);  // salt decorrelates consumers
  std::set<size_t> seen(e0.begin(), e0.end());
  CHECK(seen.size() == m.pairs.size());  // a permutation
}

TEST_CASE("next_batch loads, resizes, and clips the final batch") {
  testutil::TempDir tmp("batch");
  testutil::make_dataset(tmp.path().string(), 10, 12, 20, 4);
  auto m = data::scan_dataset(tmp.path().string(), 16, 16, 6, 1.0).train;
  REQUIRE(m.pairs.size() == 5);
  auto order = data::epoch_order(m, 0);
  auto b = data::next_batch(m, order, 0, 4);
  CHECK(b.covers.shape == std::array<int, 4>{4, 3, 16, 16});
  CHECK(b.secrets.shape == std::array<int, 4>{4, 1, 16, 16});
  CHECK(b.cover_paths.size() == 4);
  for (float v : b.covers.v) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  auto tail = data::next_batch(m, order, 4, 4);
  CHECK(tail.size() == 1);
  CHECK(code_of([&] { data::next_batch(m, order, 5, 4); }) == ErrorCode::BadArgument);
}

TEST_CASE("load_pair matches manifest order") {
  testutil::TempDir tmp("pair");
  testutil::make_dataset(tmp.path().string(), 6, 8, 8, 5);
  auto m = data::scan_dataset(tmp.path().string(), 8, 8, 7, 1.0).train;
  auto p = data::load_pair(m, 2);
  CHECK(p.size() == 1);
  CHECK(p.cover_paths[0].find(m.files[m.pairs[2].cover_index]) != std::string::npos);
}

TEST_CASE("write_manifest records the provenance header") {
  testutil::TempDir tmp("manifest");
  testutil::make_dataset(tmp.path().string(), 4, 8, 8, 6);
  auto m = data::scan_dataset(tmp.path().string(), 32, 32, 9, 1.0).train;
  data::write_manifest(m, tmp.file("m.txt"));
  std::ifstream in(tmp.file("m.txt"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "# isgan-manifest seed=9 split=train size=32x32 pairs=2");
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  CHECK(n == 4);
}

}  // TEST_SUITE
