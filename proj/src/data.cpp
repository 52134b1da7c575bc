#include "isgan/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "isgan/rng.hpp"

namespace fs = std::filesystem;

namespace isgan::data {

namespace {

constexpr uint64_t kEpochMix = 0x9E3779B97F4A7C15ull;

DatasetManifest make_manifest(const std::string& root, std::vector<std::string> files, const char* split,
                              int target_w, int target_h, uint64_t seed) {
  DatasetManifest m;
  m.root = root;
  m.files = std::move(files);
  m.split = split;
  m.target_w = target_w;
  m.target_h = target_h;
  m.seed = seed;
  for (size_t i = 0; i + 1 < m.files.size(); i += 2)
    m.pairs.push_back({static_cast<int>(i), static_cast<int>(i + 1)});
  return m;
}

img::RasterImage load_rgb(const std::string& path, int w, int h) {
  auto any = img::load_image(path);
  img::RasterImage rgb;
  if (auto* r = std::get_if<img::RasterImage>(&any))
    rgb = std::move(*r);
  else
    rgb = img::gray_to_rgb(std::get<img::GrayImage>(any));
  return img::resize_bilinear(rgb, w, h);
}

img::GrayImage load_gray(const std::string& path, int w, int h) {
  auto any = img::load_image(path);
  img::GrayImage g;
  if (auto* r = std::get_if<img::RasterImage>(&any))
    g = img::luma_of_rgb(*r);
  else
    g = std::move(std::get<img::GrayImage>(any));
  return img::resize_bilinear(g, w, h);
}

}  // namespace

DatasetSplits scan_dataset(const std::string& dir, int target_w, int target_h, uint64_t seed,
                           double split_fraction) {
  if (split_fraction < 0.0 || split_fraction > 1.0)
    fail(ErrorCode::BadArgument, "scan_dataset: split_fraction must be in [0,1]");
  if (!fs::is_directory(dir)) fail(ErrorCode::FileNotFound, "scan_dataset: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(e.path().filename().string());
  }
  if (files.size() < 2)
    fail(ErrorCode::InsufficientImages, "scan_dataset: need at least 2 PNG images in " + dir);
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  rng.shuffle(files);
  size_t n_train = static_cast<size_t>(static_cast<double>(files.size()) * split_fraction);
  DatasetSplits splits;
  splits.train = make_manifest(dir, {files.begin(), files.begin() + n_train}, "train", target_w, target_h, seed);
  splits.val = make_manifest(dir, {files.begin() + n_train, files.end()}, "val", target_w, target_h, seed);
  return splits;
}

std::vector<size_t> epoch_order(const DatasetManifest& manifest, int epoch, uint64_t salt) {
  std::vector<size_t> order(manifest.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(manifest.seed + kEpochMix * (static_cast<uint64_t>(epoch) + 1) + salt);
  rng.shuffle(order);
  return order;
}

ImagePairBatch next_batch(const DatasetManifest& manifest, const std::vector<size_t>& order, size_t start,
                          int batch_size) {
  if (manifest.pairs.empty()) fail(ErrorCode::EmptyDataset, "next_batch: empty manifest");
  if (start >= order.size()) fail(ErrorCode::BadArgument, "next_batch: cursor out of range");
  size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
  const int n = static_cast<int>(end - start);
  const int w = manifest.target_w, h = manifest.target_h;
  ImagePairBatch batch;
  batch.covers = Tensor<float>(n, 3, h, w);
  batch.secrets = Tensor<float>(n, 1, h, w);
  for (int i = 0; i < n; ++i) {
    const auto& pair = manifest.pairs[order[start + i]];
    auto cover_path = (fs::path(manifest.root) / manifest.files[pair.cover_index]).string();
    auto secret_path = (fs::path(manifest.root) / manifest.files[pair.secret_index]).string();
    img::RasterImage cover;
    img::GrayImage secret;
    try {
      cover = load_rgb(cover_path, w, h);
    } catch (const Error& e) {
      fail(ErrorCode::Io, "loading cover " + cover_path + ": " + e.what());
    }
    try {
      secret = load_gray(secret_path, w, h);
    } catch (const Error& e) {
      fail(ErrorCode::Io, "loading secret " + secret_path + ": " + e.what());
    }
    for (int c = 0; c < 3; ++c)
      for (size_t p = 0; p < cover.plane_size(); ++p)
        batch.covers.plane(i, c)[p] = static_cast<float>(cover.planes[c][p]);
    for (size_t p = 0; p < secret.plane_size(); ++p)
      batch.secrets.plane(i, 0)[p] = static_cast<float>(secret.plane[p]);
    batch.cover_paths.push_back(cover_path);
    batch.secret_paths.push_back(secret_path);
  }
  return batch;
}

ImagePairBatch load_pair(const DatasetManifest& manifest, size_t pair_index) {
  std::vector<size_t> order(manifest.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  return next_batch(manifest, order, pair_index, 1);
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write manifest " + path);
  out << "# isgan-manifest seed=" << manifest.seed << " split=" << manifest.split << " size="
      << manifest.target_w << "x" << manifest.target_h << " pairs=" << manifest.pairs.size() << "\n";
  for (const auto& f : manifest.files) out << f << "\n";
}

}  // namespace isgan::data
