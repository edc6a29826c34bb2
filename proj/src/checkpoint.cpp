#include "sgir/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sgir {

namespace {

constexpr uint32_t kMagic = 0x53474b31;  // "SGK1"
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw ParseError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in, const char* what) {
  const auto len = get<uint64_t>(in, what);
  if (len > (1ull << 30)) throw ParseError("checkpoint: implausible string length");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw ParseError(std::string("checkpoint: truncated while reading ") + what);
  return s;
}

void put_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  put<uint64_t>(out, static_cast<uint64_t>(m.rows()));
  put<uint64_t>(out, static_cast<uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
}

Eigen::MatrixXd get_matrix(std::ifstream& in, const char* what) {
  const auto rows = get<uint64_t>(in, what);
  const auto cols = get<uint64_t>(in, what);
  if (rows > (1ull << 24) || cols > (1ull << 24))
    throw ParseError("checkpoint: implausible matrix shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in, what);
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open checkpoint '" + path + "' for writing");
  put(out, kMagic);
  put(out, kFormatVersion);
  put<int32_t>(out, ck.model_cfg.feature_dim);
  put<int32_t>(out, ck.model_cfg.hidden_dim);
  put<int32_t>(out, ck.model_cfg.gin_layers);
  put<int32_t>(out, ck.completed_iterations);
  put_string(out, ck.meta_json);
  put<uint64_t>(out, ck.params.size());
  for (const auto& [name, m] : ck.params) {
    put_string(out, name);
    put_matrix(out, m);
  }
  put<uint8_t>(out, ck.has_adam ? 1 : 0);
  if (ck.has_adam) {
    put<int64_t>(out, ck.adam_t);
    for (const auto& m : ck.adam_m) put_matrix(out, m);
    for (const auto& v : ck.adam_v) put_matrix(out, v);
  }
  if (!out) throw ParseError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  if (get<uint32_t>(in, "magic") != kMagic)
    throw ParseError("checkpoint '" + path + "': bad magic (not a checkpoint?)");
  const auto version = get<uint32_t>(in, "version");
  if (version != kFormatVersion)
    throw ParseError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.model_cfg.feature_dim = get<int32_t>(in, "feature_dim");
  ck.model_cfg.hidden_dim = get<int32_t>(in, "hidden_dim");
  ck.model_cfg.gin_layers = get<int32_t>(in, "gin_layers");
  ck.completed_iterations = get<int32_t>(in, "iterations");
  ck.meta_json = get_string(in, "meta");
  const auto n = get<uint64_t>(in, "param count");
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(in, "param name");
    Eigen::MatrixXd m = get_matrix(in, name.c_str());
    ck.params.emplace_back(std::move(name), std::move(m));
  }
  ck.has_adam = get<uint8_t>(in, "adam flag") != 0;
  if (ck.has_adam) {
    ck.adam_t = get<int64_t>(in, "adam t");
    for (uint64_t i = 0; i < n; ++i) ck.adam_m.push_back(get_matrix(in, "adam m"));
    for (uint64_t i = 0; i < n; ++i) ck.adam_v.push_back(get_matrix(in, "adam v"));
  }
  return ck;
}

Checkpoint snapshot_model(GreaModel& model, const Adam<Real>* adam, int completed_iterations,
                          std::string meta_json) {
  Checkpoint ck;
  ck.model_cfg = model.cfg;
  ck.completed_iterations = completed_iterations;
  ck.meta_json = std::move(meta_json);
  for (auto& p : model.params()) ck.params.emplace_back(p.name, p.tensor.value());
  if (adam) {
    ck.has_adam = true;
    ck.adam_t = adam->t;
    ck.adam_m = adam->m;
    ck.adam_v = adam->v;
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ck, GreaModel& model, Adam<Real>* adam) {
  auto params = model.params();
  if (params.size() != ck.params.size())
    throw ValidationError("checkpoint: parameter count " + std::to_string(ck.params.size()) +
                          " does not match model (" + std::to_string(params.size()) + ")");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, m] = ck.params[i];
    if (name != params[i].name)
      throw ValidationError("checkpoint: layer '" + name + "' does not match model layer '" +
                            params[i].name + "'");
    if (m.rows() != params[i].tensor.rows() || m.cols() != params[i].tensor.cols())
      throw ValidationError("checkpoint: layer '" + name + "' has shape " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", model expects " + std::to_string(params[i].tensor.rows()) + "x" +
                            std::to_string(params[i].tensor.cols()));
    params[i].tensor.raw() = m;
  }
  if (adam) {
    if (!ck.has_adam) throw ValidationError("checkpoint: no optimizer state to resume from");
    adam->init(params);
    adam->t = ck.adam_t;
    adam->m = ck.adam_m;
    adam->v = ck.adam_v;
  }
}

GreaModel model_from_checkpoint(const Checkpoint& ck) {
  Rng rng(0);
  GreaModel model = GreaModel::make(ck.model_cfg, rng);
  apply_checkpoint(ck, model, nullptr);
  return model;
}

}  // namespace sgir
