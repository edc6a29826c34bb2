#pragma once

#include <map>
#include <string>

#include "sgir/graph.hpp"

namespace sgir {

// One JSON object per line:
//   {"id": "g1", "n": 3, "edges": [[0,1],[1,2]], "x": [[...],[...],[...]],
//    "y": 1.5}
// "y" null or absent marks the graph unlabeled; optional "y_hidden" carries a
// ground truth for evaluation-only use.  Malformed lines raise ParseError
// naming the 1-based line number; invariant violations raise ValidationError
// naming the graph id.
Dataset load_dataset(const std::string& path, const std::string& split_tag);
void save_dataset(const Dataset& ds, const std::string& path);

struct SplitInfo {
  std::string file;
  size_t count = 0;
  int feature_dim = 0;
};

// Sidecar index written next to the split files by the generator.
struct DatasetManifest {
  std::map<std::string, SplitInfo> splits;  // split tag -> info
  uint64_t seed = 0;
  std::string spec_hash;
  Real label_min = 0.0;
  Real label_max = 0.0;
  int intervals = 0;
};

void save_dataset_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_dataset_manifest(const std::string& path);

// FNV-1a over the file bytes; recorded in run manifests for reproducibility.
std::string file_hash_hex(const std::string& path);

}  // namespace sgir
