#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgir/common.hpp"

namespace sgir {

// Undirected attributed graph with an optional scalar target.  Edges are kept
// canonical: (min, max), lexicographically sorted, no duplicates, no
// self-loops.  hidden_label is an evaluation-only side channel for unlabeled
// graphs whose ground truth is known (synthetic data); the training path never
// reads it.
struct Graph {
  std::string id;
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  Eigen::MatrixXd x;  // num_nodes x feature_dim
  std::optional<Real> label;
  std::optional<Real> hidden_label;

  int feature_dim() const { return static_cast<int>(x.cols()); }

  // Both directions of every undirected edge, in canonical edge order.
  // Aggregation order is fixed by construction so reductions are bit-stable.
  std::vector<std::pair<int, int>> directed_edges() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(edges.size() * 2);
    for (const auto& [a, b] : edges) {
      out.emplace_back(a, b);
      out.emplace_back(b, a);
    }
    return out;
  }
};

// Normalizes edges to canonical form (collapsing duplicates), then checks the
// type invariants.  Throws ValidationError naming the graph id.
void normalize_and_validate(Graph& g);

struct Dataset {
  std::string split_tag;
  std::vector<Graph> labeled;    // file order
  std::vector<Graph> unlabeled;  // file order

  size_t size() const { return labeled.size() + unlabeled.size(); }
};

// Checks dataset-level invariants: globally unique ids and a consistent
// feature dimension.  Throws ValidationError.
void validate_dataset(const Dataset& ds);

// Sorted list of graph ids present in both datasets (train/test leakage scan).
std::vector<std::string> split_overlap_check(const Dataset& a, const Dataset& b);

}  // namespace sgir
