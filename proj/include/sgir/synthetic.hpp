#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgir/graph.hpp"
#include "sgir/graph_io.hpp"
#include "sgir/rng.hpp"

namespace sgir {

// Random-graph generation spec with exactly computable targets, so every
// generated label has an oracle.  Targets:
//   triangles:  alpha * (#triangles)
//   mean_degree: beta * (2E / N)
//   triangles_plus_meandeg: alpha * (#triangles) + beta * (2E / N)
// Gaussian noise with sd noise_sigma is added to stored labels; the hidden
// ground truth on unlabeled graphs stays noise-free.
//
// Per-interval quotas are filled by rejection over G(n, p) draws with
// n ~ U[nodes_min, nodes_max] and p ~ U[edge_prob_min, edge_prob_max].
// train_frequencies lists the labeled quota per interval (the imbalance
// profile); the other splits fill near-uniform per-interval quotas.
struct SyntheticSpec {
  int feature_dim = 4;  // in [1, 4]: [bias, degree, local triangles, mean nbr degree]
  int nodes_min = 8;
  int nodes_max = 18;
  std::string target = "triangles_plus_meandeg";
  Real alpha = 1.0;
  Real beta = 0.0;
  Real noise_sigma = 0.0;
  Real label_min = 0.0;
  Real label_max = 50.0;
  int intervals = 20;
  std::vector<long> train_frequencies;  // size == intervals
  long valid_per_interval = 5;
  long test_per_interval = 10;
  long unlabeled_per_interval = 250;
  Real edge_prob_min = 0.05;
  Real edge_prob_max = 0.6;
  long max_attempts = 2'000'000;
};

SyntheticSpec load_synthetic_spec(const std::string& path);
std::string synthetic_spec_json(const SyntheticSpec& spec);

// Exact structural target, before noise.
Real oracle_label(const SyntheticSpec& spec, const Graph& g);

struct SyntheticResult {
  Dataset train;      // labeled, imbalanced
  Dataset valid;      // labeled, near-uniform
  Dataset test;       // labeled, near-uniform
  Dataset unlabeled;  // y absent, hidden truth carried
};

// Deterministic in (spec, seed): the same inputs reproduce byte-identical
// split files.  Raises ConfigError if the quota table cannot be filled within
// max_attempts.
SyntheticResult generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// Generates, writes the four split files plus the sidecar manifest into dir.
DatasetManifest write_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& dir);

}  // namespace sgir
