#pragma once

#include <string>
#include <vector>

#include "isgan/image.hpp"
#include "isgan/tensor.hpp"

namespace isgan::data {

struct PairEntry {
  int cover_index;
  int secret_index;
};

/// Deterministic pairing of a directory of PNGs: files sorted, shuffled by
/// seed, split, then consecutive disjoint (cover, secret) pairs formed.
struct DatasetManifest {
  std::string root;
  std::vector<std::string> files;  // relative paths, in pairing order
  std::vector<PairEntry> pairs;
  std::string split;  // "train" or "val"
  int target_w = 64;
  int target_h = 64;
  uint64_t seed = 0;

  size_t pair_count() const { return pairs.size(); }
};

struct DatasetSplits {
  DatasetManifest train;
  DatasetManifest val;
};

DatasetSplits scan_dataset(const std::string& dir, int target_w, int target_h, uint64_t seed,
                           double split_fraction);

struct ImagePairBatch {
  Tensor<float> covers;   // (N,3,H,W) RGB
  Tensor<float> secrets;  // (N,1,H,W)
  std::vector<std::string> cover_paths;
  std::vector<std::string> secret_paths;

  int size() const { return covers.batch(); }
};

/// Deterministic per-epoch pair order (reshuffled by seed + epoch). `salt`
/// decorrelates independent consumers of the same manifest.
std::vector<size_t> epoch_order(const DatasetManifest& manifest, int epoch, uint64_t salt = 0);

/// Loads pairs order[start .. start+batch_size) (clipped to the epoch end),
/// resized to the manifest target size; secrets are converted to gray luma.
ImagePairBatch next_batch(const DatasetManifest& manifest, const std::vector<size_t>& order, size_t start,
                          int batch_size);

/// Loads a single pair (convenience for evaluation).
ImagePairBatch load_pair(const DatasetManifest& manifest, size_t pair_index);

/// Plain-text listing for reproducibility audits.
void write_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace isgan::data
