#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "isgan/image.hpp"
#include "isgan/rng.hpp"

namespace testutil {

/// Smooth random field in [0.05, 0.95]: a few low-frequency cosine waves plus
/// mild per-pixel noise, loosely mimicking natural-image statistics.
inline std::vector<double> synth_field(isgan::Rng& rng, int w, int h) {
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k)
    waves.push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), rng.uniform(0.0, 6.2831853),
                     rng.uniform(0.3, 1.0)});
  std::vector<double> f(static_cast<size_t>(w) * h);
  double lo = 1e30, hi = -1e30;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0;
      for (const auto& wv : waves)
        v += wv.amp * std::cos(6.2831853 * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
      v += rng.uniform(-0.08, 0.08);
      f[static_cast<size_t>(y) * w + x] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (auto& v : f) v = 0.05 + 0.9 * (v - lo) / (hi - lo + 1e-12);
  return f;
}

inline isgan::img::GrayImage synth_gray(uint64_t seed, int w, int h) {
  isgan::Rng rng(seed);
  isgan::img::GrayImage g;
  g.width = w;
  g.height = h;
  g.plane = synth_field(rng, w, h);
  return g;
}

inline isgan::img::RasterImage synth_rgb(uint64_t seed, int w, int h) {
  isgan::Rng rng(seed);
  auto base = synth_field(rng, w, h);
  isgan::img::RasterImage im;
  im.width = w;
  im.height = h;
  im.space = isgan::img::ColorSpace::RGB;
  for (int c = 0; c < 3; ++c) {
    auto tint = synth_field(rng, w, h);
    im.planes[c].resize(base.size());
    for (size_t i = 0; i < base.size(); ++i) im.planes[c][i] = 0.65 * base[i] + 0.35 * tint[i];
  }
  return im;
}

/// Unique scratch directory under the current working directory, removed on
/// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::absolute("test_tmp_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Writes `n` synthetic RGB PNGs named img_###.png into dir.
inline void make_dataset(const std::string& dir, int n, int w, int h, uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03d.png", i);
    isgan::img::save_image(synth_rgb(seed + 1000 + i, w, h), dir + "/" + name);
  }
}

inline std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
