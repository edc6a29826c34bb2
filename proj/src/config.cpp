#include "sgir/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace sgir {

using nlohmann::json;

MixSource parse_mix_source(const std::string& name) {
  if (name == "imb") return MixSource::Imb;
  if (name == "imb+conf") return MixSource::ImbConf;
  if (name == "imb+unlabeled") return MixSource::ImbUnlabeled;
  throw ConfigError("unknown mix source '" + name +
                    "' (expected imb, imb+conf, or imb+unlabeled)");
}

ConfidenceMethod parse_confidence_method(const std::string& name) {
  if (name == "gration") return ConfidenceMethod::GRation;
  if (name == "dropout") return ConfidenceMethod::Dropout;
  throw ConfigError("unknown confidence method '" + name +
                    "' (expected gration or dropout)");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "iterations", "epochs", "batch_size", "lr", "hidden_dim",
      "gin_layers", "c_pseudo", "c_mixup", "eval_bins", "pseudo_boundaries",
      "mixup_boundaries", "eval_boundaries", "tau_pct", "confidence",
      "dropout_samples", "dropout_rate", "env_batch", "beta_mix", "n_aug",
      "z_source", "h_source", "gamma_size", "temperature", "regu_coeff",
      "t_many", "t_few", "threads", "valid_every", "ablate",
      "rates_include_pseudo"};
  return keys;
}

void check_boundaries(const std::vector<Real>& b, const std::string& key,
                      std::vector<std::string>& errs) {
  if (b.empty()) return;
  if (b.size() < 2) {
    errs.push_back(key + " needs at least two boundaries");
    return;
  }
  for (size_t i = 0; i + 1 < b.size(); ++i)
    if (!(b[i] < b[i + 1])) {
      errs.push_back(key + " must be strictly increasing");
      return;
    }
  for (Real v : b)
    if (!std::isfinite(v)) {
      errs.push_back(key + " contains a non-finite value");
      return;
    }
}

}  // namespace

void validate_run_config(const RunConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.iterations < 0) errs.push_back("iterations must be >= 0");
  if (cfg.epochs < 1) errs.push_back("epochs must be >= 1");
  if (cfg.batch_size < 1) errs.push_back("batch_size must be >= 1");
  if (!(cfg.lr > 0) || !std::isfinite(cfg.lr)) errs.push_back("lr must be positive and finite");
  if (cfg.hidden_dim < 1) errs.push_back("hidden_dim must be >= 1");
  if (cfg.gin_layers < 1) errs.push_back("gin_layers must be >= 1");
  if (cfg.c_pseudo < 1) errs.push_back("c_pseudo must be >= 1");
  if (cfg.c_mixup < 1) errs.push_back("c_mixup must be >= 1");
  if (cfg.eval_bins < 1) errs.push_back("eval_bins must be >= 1");
  check_boundaries(cfg.pseudo_boundaries, "pseudo_boundaries", errs);
  check_boundaries(cfg.mixup_boundaries, "mixup_boundaries", errs);
  check_boundaries(cfg.eval_boundaries, "eval_boundaries", errs);
  if (!(cfg.tau_pct > 0 && cfg.tau_pct < 100))
    errs.push_back("tau_pct must be in (0, 100)");
  if (cfg.confidence == ConfidenceMethod::Dropout) {
    if (cfg.dropout_samples < 2) errs.push_back("dropout_samples must be >= 2");
    if (!(cfg.dropout_rate > 0 && cfg.dropout_rate < 1))
      errs.push_back("dropout_rate must be in (0, 1)");
  }
  if (cfg.confidence == ConfidenceMethod::GRation && cfg.env_batch < 2)
    errs.push_back("env_batch must be >= 2");
  if (!(cfg.beta_mix > 0)) errs.push_back("beta_mix must be positive");
  if (cfg.n_aug < -1) errs.push_back("n_aug must be >= -1 (-1 = labeled-train size)");
  if (!(cfg.gamma_size >= 0 && cfg.gamma_size <= 1))
    errs.push_back("gamma_size must be in [0, 1]");
  if (!(cfg.temperature > 0)) errs.push_back("temperature must be positive");
  if (cfg.regu_coeff < 0) errs.push_back("regu_coeff must be >= 0");
  if (cfg.t_few < 1) errs.push_back("t_few must be >= 1");
  if (cfg.t_many <= cfg.t_few) errs.push_back("t_many must be > t_few");
  if (cfg.threads < 1) errs.push_back("threads must be >= 1");
  if (cfg.valid_every < 1) errs.push_back("valid_every must be >= 1");
  if (!errs.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

RunConfig run_config_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");

  std::vector<std::string> errs;
  for (const auto& [key, _] : j.items())
    if (!known_keys().count(key)) errs.push_back("unknown key '" + key + "'");

  RunConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.gin_layers = j.value("gin_layers", cfg.gin_layers);
    cfg.c_pseudo = j.value("c_pseudo", cfg.c_pseudo);
    cfg.c_mixup = j.value("c_mixup", cfg.c_mixup);
    cfg.eval_bins = j.value("eval_bins", cfg.eval_bins);
    if (j.contains("pseudo_boundaries")) {
      if (j.contains("c_pseudo"))
        errs.push_back("give either c_pseudo or pseudo_boundaries, not both");
      cfg.pseudo_boundaries = j.at("pseudo_boundaries").get<std::vector<Real>>();
      cfg.c_pseudo = std::max<int>(1, static_cast<int>(cfg.pseudo_boundaries.size()) - 1);
    }
    if (j.contains("mixup_boundaries")) {
      if (j.contains("c_mixup"))
        errs.push_back("give either c_mixup or mixup_boundaries, not both");
      cfg.mixup_boundaries = j.at("mixup_boundaries").get<std::vector<Real>>();
      cfg.c_mixup = std::max<int>(1, static_cast<int>(cfg.mixup_boundaries.size()) - 1);
    }
    if (j.contains("eval_boundaries")) {
      if (j.contains("eval_bins"))
        errs.push_back("give either eval_bins or eval_boundaries, not both");
      cfg.eval_boundaries = j.at("eval_boundaries").get<std::vector<Real>>();
      cfg.eval_bins = std::max<int>(1, static_cast<int>(cfg.eval_boundaries.size()) - 1);
    }
    cfg.tau_pct = j.value("tau_pct", cfg.tau_pct);
    cfg.rates_include_pseudo = j.value("rates_include_pseudo", cfg.rates_include_pseudo);
    if (j.contains("confidence"))
      cfg.confidence = parse_confidence_method(j.at("confidence").get<std::string>());
    cfg.dropout_samples = j.value("dropout_samples", cfg.dropout_samples);
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
    cfg.env_batch = j.value("env_batch", cfg.env_batch);
    cfg.beta_mix = j.value("beta_mix", cfg.beta_mix);
    cfg.n_aug = j.value("n_aug", cfg.n_aug);
    if (j.contains("z_source"))
      cfg.z_source = parse_mix_source(j.at("z_source").get<std::string>());
    if (j.contains("h_source"))
      cfg.h_source = parse_mix_source(j.at("h_source").get<std::string>());
    cfg.gamma_size = j.value("gamma_size", cfg.gamma_size);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.regu_coeff = j.value("regu_coeff", cfg.regu_coeff);
    cfg.t_many = j.value("t_many", cfg.t_many);
    cfg.t_few = j.value("t_few", cfg.t_few);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.valid_every = j.value("valid_every", cfg.valid_every);
    if (j.contains("ablate"))
      for (const auto& a : j.at("ablate")) apply_ablation(cfg, a.get<std::string>());
  } catch (const ConfigError& e) {
    errs.push_back(e.what());
  } catch (const json::exception& e) {
    errs.push_back(e.what());
  }

  if (!errs.empty()) {
    std::string msg = origin + " invalid:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_from_json_text(buf.str(), "config '" + path + "'");
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["iterations"] = cfg.iterations;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["hidden_dim"] = cfg.hidden_dim;
  j["gin_layers"] = cfg.gin_layers;
  if (cfg.pseudo_boundaries.empty())
    j["c_pseudo"] = cfg.c_pseudo;
  else
    j["pseudo_boundaries"] = cfg.pseudo_boundaries;
  if (cfg.mixup_boundaries.empty())
    j["c_mixup"] = cfg.c_mixup;
  else
    j["mixup_boundaries"] = cfg.mixup_boundaries;
  if (cfg.eval_boundaries.empty())
    j["eval_bins"] = cfg.eval_bins;
  else
    j["eval_boundaries"] = cfg.eval_boundaries;
  j["tau_pct"] = cfg.tau_pct;
  j["rates_include_pseudo"] = cfg.rates_include_pseudo;
  j["confidence"] = confidence_method_name(cfg.confidence);
  j["dropout_samples"] = cfg.dropout_samples;
  j["dropout_rate"] = cfg.dropout_rate;
  j["env_batch"] = cfg.env_batch;
  j["beta_mix"] = cfg.beta_mix;
  j["n_aug"] = cfg.n_aug;
  j["z_source"] = mix_source_name(cfg.z_source);
  j["h_source"] = mix_source_name(cfg.h_source);
  j["gamma_size"] = cfg.gamma_size;
  j["temperature"] = cfg.temperature;
  j["regu_coeff"] = cfg.regu_coeff;
  j["t_many"] = cfg.t_many;
  j["t_few"] = cfg.t_few;
  j["threads"] = cfg.threads;
  j["valid_every"] = cfg.valid_every;
  std::vector<std::string> ablate;
  if (cfg.ablate_no_sigma) ablate.push_back("no-sigma");
  if (cfg.ablate_no_sampling) ablate.push_back("no-sampling");
  if (cfg.ablate_no_mixup) ablate.push_back("no-mixup");
  if (cfg.ablate_no_unlabeled) ablate.push_back("no-unlabeled");
  j["ablate"] = ablate;
  return j.dump(2);  // nlohmann dumps object keys sorted; canonical by construction
}

std::string run_config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(run_config_json(cfg)));
}

void apply_ablation(RunConfig& cfg, const std::string& name) {
  if (name == "no-sigma") {
    cfg.ablate_no_sigma = true;
  } else if (name == "no-sampling") {
    cfg.ablate_no_sampling = true;
  } else if (name == "no-mixup") {
    cfg.ablate_no_mixup = true;
  } else if (name == "no-unlabeled") {
    cfg.ablate_no_unlabeled = true;
  } else {
    throw ConfigError("unknown ablation '" + name +
                      "' (expected no-sigma, no-sampling, no-mixup, or no-unlabeled)");
  }
}

}  // namespace sgir
