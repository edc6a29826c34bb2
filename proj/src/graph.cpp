#include "sgir/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace sgir {

void normalize_and_validate(Graph& g) {
  if (g.num_nodes < 1)
    throw ValidationError("graph '" + g.id + "': num_nodes must be positive");
  for (auto& [a, b] : g.edges) {
    if (a == b) throw ValidationError("graph '" + g.id + "': self-loop at node " + std::to_string(a));
    if (a < 0 || b < 0 || a >= g.num_nodes || b >= g.num_nodes)
      throw ValidationError("graph '" + g.id + "': edge endpoint out of range");
    if (a > b) std::swap(a, b);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  if (g.x.rows() != g.num_nodes)
    throw ValidationError("graph '" + g.id + "': feature row count " + std::to_string(g.x.rows()) +
                          " != num_nodes " + std::to_string(g.num_nodes));
  if (g.x.cols() < 1) throw ValidationError("graph '" + g.id + "': empty feature vectors");
  if (!g.x.allFinite()) throw ValidationError("graph '" + g.id + "': non-finite feature entry");
  if (g.label && !std::isfinite(*g.label))
    throw ValidationError("graph '" + g.id + "': non-finite label");
  if (g.hidden_label && !std::isfinite(*g.hidden_label))
    throw ValidationError("graph '" + g.id + "': non-finite hidden label");
}

void validate_dataset(const Dataset& ds) {
  std::unordered_set<std::string> ids;
  int dim = -1;
  auto check = [&](const Graph& g) {
    if (!ids.insert(g.id).second)
      throw ValidationError("dataset '" + ds.split_tag + "': duplicate graph id '" + g.id + "'");
    if (dim < 0) dim = g.feature_dim();
    if (g.feature_dim() != dim)
      throw ValidationError("dataset '" + ds.split_tag + "': graph '" + g.id +
                            "' feature dim " + std::to_string(g.feature_dim()) +
                            " != " + std::to_string(dim));
  };
  for (const auto& g : ds.labeled) check(g);
  for (const auto& g : ds.unlabeled) check(g);
}

std::vector<std::string> split_overlap_check(const Dataset& a, const Dataset& b) {
  std::set<std::string> ids_a;
  for (const auto& g : a.labeled) ids_a.insert(g.id);
  for (const auto& g : a.unlabeled) ids_a.insert(g.id);
  std::vector<std::string> shared;
  auto scan = [&](const Graph& g) {
    if (ids_a.count(g.id)) shared.push_back(g.id);
  };
  for (const auto& g : b.labeled) scan(g);
  for (const auto& g : b.unlabeled) scan(g);
  std::sort(shared.begin(), shared.end());
  shared.erase(std::unique(shared.begin(), shared.end()), shared.end());
  return shared;
}

}  // namespace sgir
