#include "sgir/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace sgir {

using nlohmann::json;

namespace {

void validate_spec(const SyntheticSpec& spec) {
  std::vector<std::string> errs;
  if (spec.feature_dim < 1 || spec.feature_dim > 4)
    errs.push_back("feature_dim must be in [1, 4]");
  if (spec.nodes_min < 1 || spec.nodes_max < spec.nodes_min)
    errs.push_back("node count range invalid");
  if (spec.target != "triangles" && spec.target != "mean_degree" &&
      spec.target != "triangles_plus_meandeg")
    errs.push_back("unknown target '" + spec.target + "'");
  if (!(spec.label_min < spec.label_max)) errs.push_back("label range is empty");
  if (spec.intervals < 1) errs.push_back("intervals must be positive");
  if (spec.train_frequencies.size() != static_cast<size_t>(spec.intervals))
    errs.push_back("train_frequencies must list one quota per interval");
  for (long f : spec.train_frequencies)
    if (f < 0) errs.push_back("negative train quota");
  if (spec.noise_sigma < 0) errs.push_back("noise_sigma must be non-negative");
  if (!(spec.edge_prob_min >= 0 && spec.edge_prob_max <= 1 &&
        spec.edge_prob_min <= spec.edge_prob_max))
    errs.push_back("edge probability range invalid");
  if (spec.valid_per_interval < 0 || spec.test_per_interval < 0 ||
      spec.unlabeled_per_interval < 0)
    errs.push_back("per-interval quotas must be non-negative");
  if (spec.max_attempts < 1) errs.push_back("max_attempts must be positive");
  if (!errs.empty()) {
    std::string msg = "synthetic spec invalid:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

struct RawGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> degree;
  std::vector<int> tri;  // triangles through each node
};

RawGraph draw_graph(const SyntheticSpec& spec, Rng& rng) {
  RawGraph g;
  g.n = spec.nodes_min + static_cast<int>(rng.below(
                             static_cast<uint64_t>(spec.nodes_max - spec.nodes_min + 1)));
  const Real p = rng.uniform(spec.edge_prob_min, spec.edge_prob_max);
  std::vector<std::vector<bool>> adj(g.n, std::vector<bool>(g.n, false));
  for (int a = 0; a < g.n; ++a)
    for (int b = a + 1; b < g.n; ++b)
      if (rng.uniform01() < p) {
        adj[a][b] = adj[b][a] = true;
        g.edges.emplace_back(a, b);
      }
  g.degree.assign(g.n, 0);
  for (const auto& [a, b] : g.edges) {
    ++g.degree[a];
    ++g.degree[b];
  }
  g.tri.assign(g.n, 0);
  for (int v = 0; v < g.n; ++v) {
    std::vector<int> nbrs;
    for (int u = 0; u < g.n; ++u)
      if (adj[v][u]) nbrs.push_back(u);
    for (size_t i = 0; i < nbrs.size(); ++i)
      for (size_t j = i + 1; j < nbrs.size(); ++j)
        if (adj[nbrs[i]][nbrs[j]]) ++g.tri[v];
  }
  return g;
}

Real target_value(const SyntheticSpec& spec, int n, long total_tri, Real mean_degree) {
  if (spec.target == "triangles") return spec.alpha * static_cast<Real>(total_tri);
  if (spec.target == "mean_degree") return spec.beta * mean_degree;
  (void)n;
  return spec.alpha * static_cast<Real>(total_tri) + spec.beta * mean_degree;
}

Graph finish_graph(const SyntheticSpec& spec, const RawGraph& raw, const std::string& id) {
  Graph g;
  g.id = id;
  g.num_nodes = raw.n;
  g.edges = raw.edges;
  g.x.resize(raw.n, spec.feature_dim);
  for (int v = 0; v < raw.n; ++v) {
    Real nbr_deg_sum = 0.0;
    // mean degree over neighbors; 0 for isolated nodes
    Real mean_nbr = 0.0;
    if (raw.degree[v] > 0) {
      for (const auto& [a, b] : raw.edges) {
        if (a == v) nbr_deg_sum += raw.degree[b];
        if (b == v) nbr_deg_sum += raw.degree[a];
      }
      mean_nbr = nbr_deg_sum / raw.degree[v];
    }
    const Real feats[4] = {1.0, raw.degree[v] / 10.0, raw.tri[v] / 10.0, mean_nbr / 10.0};
    for (int c = 0; c < spec.feature_dim; ++c) g.x(v, c) = feats[c];
  }
  return g;
}

}  // namespace

Real oracle_label(const SyntheticSpec& spec, const Graph& g) {
  std::vector<std::vector<bool>> adj(g.num_nodes, std::vector<bool>(g.num_nodes, false));
  for (const auto& [a, b] : g.edges) adj[a][b] = adj[b][a] = true;
  long total_tri = 0;
  for (int a = 0; a < g.num_nodes; ++a)
    for (int b = a + 1; b < g.num_nodes; ++b)
      for (int c = b + 1; c < g.num_nodes; ++c)
        if (adj[a][b] && adj[a][c] && adj[b][c]) ++total_tri;
  const Real mean_degree =
      g.num_nodes > 0 ? 2.0 * static_cast<Real>(g.edges.size()) / g.num_nodes : 0.0;
  return target_value(spec, g.num_nodes, total_tri, mean_degree);
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  validate_spec(spec);
  Rng rng = substream(seed, "synthetic");

  enum Split { kTrain = 0, kValid, kTest, kUnlabeled };
  const char* split_names[4] = {"train", "valid", "test", "unlabeled"};
  std::vector<std::vector<long>> quota(4);
  quota[kTrain] = spec.train_frequencies;
  quota[kValid].assign(spec.intervals, spec.valid_per_interval);
  quota[kTest].assign(spec.intervals, spec.test_per_interval);
  quota[kUnlabeled].assign(spec.intervals, spec.unlabeled_per_interval);
  long remaining = 0;
  for (const auto& q : quota) for (long v : q) remaining += v;

  SyntheticResult res;
  res.train.split_tag = "train";
  res.valid.split_tag = "valid";
  res.test.split_tag = "test";
  res.unlabeled.split_tag = "unlabeled";
  Dataset* out[4] = {&res.train, &res.valid, &res.test, &res.unlabeled};
  long seq[4] = {0, 0, 0, 0};
  const Real width = (spec.label_max - spec.label_min) / spec.intervals;

  long attempts = 0;
  while (remaining > 0) {
    if (++attempts > spec.max_attempts)
      throw ConfigError("synthetic generation: quota table not fillable within " +
                        std::to_string(spec.max_attempts) + " attempts (" +
                        std::to_string(remaining) + " slots left); the target/interval "
                        "combination is too hard to reach by rejection");
    RawGraph raw = draw_graph(spec, rng);
    long total_tri = 0;
    for (int v : raw.tri) total_tri += v;
    total_tri /= 3;  // each triangle counted at its three corners
    const Real mean_degree = 2.0 * static_cast<Real>(raw.edges.size()) / raw.n;
    const Real exact = target_value(spec, raw.n, total_tri, mean_degree);
    const Real noise = spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0;
    const Real y = exact + noise;
    if (y < spec.label_min || y >= spec.label_max) continue;
    const int interval = std::min(static_cast<int>((y - spec.label_min) / width),
                                  spec.intervals - 1);
    for (int s = 0; s < 4; ++s) {
      if (quota[s][interval] <= 0) continue;
      char id[40];
      std::snprintf(id, sizeof(id), "%s-%06ld", split_names[s], seq[s]++);
      Graph g = finish_graph(spec, raw, id);
      if (s == kUnlabeled) {
        g.hidden_label = exact;
      } else {
        g.label = y;
      }
      normalize_and_validate(g);
      if (s == kUnlabeled)
        out[s]->unlabeled.push_back(std::move(g));
      else
        out[s]->labeled.push_back(std::move(g));
      --quota[s][interval];
      --remaining;
      break;
    }
  }
  for (auto* ds : out) validate_dataset(*ds);
  return res;
}

DatasetManifest write_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& dir) {
  std::filesystem::create_directories(dir);
  SyntheticResult res = generate_synthetic(spec, seed);
  DatasetManifest m;
  m.seed = seed;
  m.spec_hash = hex64(fnv1a64(synthetic_spec_json(spec)));
  m.label_min = spec.label_min;
  m.label_max = spec.label_max;
  m.intervals = spec.intervals;
  const Dataset* splits[4] = {&res.train, &res.valid, &res.test, &res.unlabeled};
  for (const Dataset* ds : splits) {
    const std::string file = ds->split_tag + ".jsonl";
    save_dataset(*ds, dir + "/" + file);
    SplitInfo info;
    info.file = file;
    info.count = ds->size();
    info.feature_dim = spec.feature_dim;
    m.splits[ds->split_tag] = info;
  }
  save_dataset_manifest(m, dir + "/dataset_manifest.json");
  return m;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synthetic spec '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("synthetic spec '" + path + "': " + e.what());
  }
  SyntheticSpec spec;
  try {
    spec.feature_dim = j.value("feature_dim", spec.feature_dim);
    spec.nodes_min = j.value("nodes_min", spec.nodes_min);
    spec.nodes_max = j.value("nodes_max", spec.nodes_max);
    spec.target = j.value("target", spec.target);
    spec.alpha = j.value("alpha", spec.alpha);
    spec.beta = j.value("beta", spec.beta);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.label_min = j.value("label_min", spec.label_min);
    spec.label_max = j.value("label_max", spec.label_max);
    spec.intervals = j.value("intervals", spec.intervals);
    if (j.contains("train_frequencies")) {
      spec.train_frequencies = j.at("train_frequencies").get<std::vector<long>>();
    } else if (j.contains("train_profile")) {
      const auto& prof = j.at("train_profile");
      const Real base = prof.at("base").get<Real>();
      const Real decay = prof.at("decay").get<Real>();
      for (int i = 0; i < spec.intervals; ++i)
        spec.train_frequencies.push_back(
            std::max<long>(0, std::lround(base * std::pow(decay, i))));
    }
    spec.valid_per_interval = j.value("valid_per_interval", spec.valid_per_interval);
    spec.test_per_interval = j.value("test_per_interval", spec.test_per_interval);
    spec.unlabeled_per_interval = j.value("unlabeled_per_interval", spec.unlabeled_per_interval);
    spec.edge_prob_min = j.value("edge_prob_min", spec.edge_prob_min);
    spec.edge_prob_max = j.value("edge_prob_max", spec.edge_prob_max);
    spec.max_attempts = j.value("max_attempts", spec.max_attempts);
  } catch (const json::exception& e) {
    throw ConfigError("synthetic spec '" + path + "': " + e.what());
  }
  validate_spec(spec);
  return spec;
}

std::string synthetic_spec_json(const SyntheticSpec& spec) {
  json j;
  j["feature_dim"] = spec.feature_dim;
  j["nodes_min"] = spec.nodes_min;
  j["nodes_max"] = spec.nodes_max;
  j["target"] = spec.target;
  j["alpha"] = spec.alpha;
  j["beta"] = spec.beta;
  j["noise_sigma"] = spec.noise_sigma;
  j["label_min"] = spec.label_min;
  j["label_max"] = spec.label_max;
  j["intervals"] = spec.intervals;
  j["train_frequencies"] = spec.train_frequencies;
  j["valid_per_interval"] = spec.valid_per_interval;
  j["test_per_interval"] = spec.test_per_interval;
  j["unlabeled_per_interval"] = spec.unlabeled_per_interval;
  j["edge_prob_min"] = spec.edge_prob_min;
  j["edge_prob_max"] = spec.edge_prob_max;
  j["max_attempts"] = spec.max_attempts;
  return j.dump(2);
}

}  // namespace sgir
