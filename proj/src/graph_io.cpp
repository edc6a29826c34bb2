#include "sgir/graph_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace sgir {

using nlohmann::json;

namespace {

Graph parse_graph_line(const std::string& line, size_t lineno) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
  Graph g;
  try {
    if (!j.is_object()) throw ParseError("not a JSON object");
    g.id = j.at("id").get<std::string>();
    g.num_nodes = j.at("n").get<int>();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("edge entry is not a pair");
      g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    const auto& x = j.at("x");
    if (!x.is_array() || x.empty()) throw ParseError("'x' must be a non-empty array of rows");
    const size_t dim = x[0].size();
    g.x.resize(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(dim));
    for (size_t r = 0; r < x.size(); ++r) {
      if (!x[r].is_array() || x[r].size() != dim) throw ParseError("ragged feature rows");
      for (size_t c = 0; c < dim; ++c) g.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x[r][c].get<double>();
    }
    if (j.contains("y") && !j.at("y").is_null()) g.label = j.at("y").get<double>();
    if (j.contains("y_hidden") && !j.at("y_hidden").is_null())
      g.hidden_label = j.at("y_hidden").get<double>();
  } catch (const ParseError&) {
    throw;
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
  return g;
}

}  // namespace

Dataset load_dataset(const std::string& path, const std::string& split_tag) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  Dataset ds;
  ds.split_tag = split_tag;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Graph g;
    try {
      g = parse_graph_line(line, lineno);
    } catch (const ParseError& e) {
      std::string msg = e.what();
      if (msg.rfind("line ", 0) != 0) msg = "line " + std::to_string(lineno) + ": " + msg;
      throw ParseError("'" + path + "' " + msg);
    }
    normalize_and_validate(g);
    if (g.label)
      ds.labeled.push_back(std::move(g));
    else
      ds.unlabeled.push_back(std::move(g));
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  auto dump = [&out](const Graph& g) {
    json j;
    j["id"] = g.id;
    j["n"] = g.num_nodes;
    json edges = json::array();
    for (const auto& [a, b] : g.edges) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    json x = json::array();
    for (Eigen::Index r = 0; r < g.x.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < g.x.cols(); ++c) row.push_back(g.x(r, c));
      x.push_back(std::move(row));
    }
    j["x"] = std::move(x);
    j["y"] = g.label ? json(*g.label) : json(nullptr);
    if (g.hidden_label) j["y_hidden"] = *g.hidden_label;
    out << j.dump() << "\n";
  };
  for (const auto& g : ds.labeled) dump(g);
  for (const auto& g : ds.unlabeled) dump(g);
}

void save_dataset_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  for (const auto& [tag, info] : m.splits)
    j["splits"][tag] = {{"file", info.file}, {"count", info.count}, {"feature_dim", info.feature_dim}};
  j["seed"] = m.seed;
  j["spec_hash"] = m.spec_hash;
  j["label_min"] = m.label_min;
  j["label_max"] = m.label_max;
  j["intervals"] = m.intervals;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

DatasetManifest load_dataset_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset manifest '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("dataset manifest '" + path + "': " + e.what());
  }
  DatasetManifest m;
  try {
    for (const auto& [tag, info] : j.at("splits").items()) {
      SplitInfo s;
      s.file = info.at("file").get<std::string>();
      s.count = info.at("count").get<size_t>();
      s.feature_dim = info.at("feature_dim").get<int>();
      m.splits[tag] = std::move(s);
    }
    m.seed = j.value("seed", 0ull);
    m.spec_hash = j.value("spec_hash", std::string());
    m.label_min = j.value("label_min", 0.0);
    m.label_max = j.value("label_max", 0.0);
    m.intervals = j.value("intervals", 0);
  } catch (const json::exception& e) {
    throw ParseError("dataset manifest '" + path + "': " + e.what());
  }
  return m;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for hashing");
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return hex64(h);
}

}  // namespace sgir
