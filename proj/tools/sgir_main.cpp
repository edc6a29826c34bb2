#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgir/checkpoint.hpp"
#include "sgir/config.hpp"
#include "sgir/graph_io.hpp"
#include "sgir/selftrain.hpp"
#include "sgir/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sgir;

namespace {

// Exit codes: 0 success, 1 usage/config, 2 data validation, 3 numeric fault.
int guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 3;
  }
}

std::string slurp(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const std::string& path, const char* what) {
  try {
    return json::parse(slurp(path, what));
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " '" + path + "': " + e.what());
  }
}

// Parses a run manifest's embedded config and refuses files whose config no
// longer hashes to the recorded config_hash (edited after the run).
RunConfig manifest_config(const json& manifest, const std::string& path) {
  if (!manifest.contains("config"))
    throw ConfigError("manifest '" + path + "' has no config section");
  const RunConfig cfg =
      run_config_from_json_text(manifest.at("config").dump(), "manifest '" + path + "' config");
  if (!manifest.contains("config_hash"))
    throw ConfigError("manifest '" + path + "' has no config_hash");
  if (manifest.at("config_hash").get<std::string>() != run_config_hash(cfg))
    throw ConfigError("manifest '" + path +
                      "' was modified after the run: its config does not match its config_hash");
  return cfg;
}

struct LoadedData {
  Dataset train, valid, test, unlabeled;
  bool has_unlabeled = false;
  std::map<std::string, std::string> hashes;
};

LoadedData load_data(const std::string& dir) {
  if (dir.empty())
    throw ConfigError("no data directory: pass --data or set SGIR_DATA_DIR");
  std::map<std::string, std::string> files;
  const std::string manifest_path = dir + "/dataset_manifest.json";
  if (fs::exists(manifest_path)) {
    const DatasetManifest m = load_dataset_manifest(manifest_path);
    for (const auto& [tag, info] : m.splits) files[tag] = dir + "/" + info.file;
  } else {
    for (const char* tag : {"train", "valid", "test", "unlabeled"}) {
      const std::string p = dir + "/" + tag + std::string(".jsonl");
      if (fs::exists(p)) files[tag] = p;
    }
  }
  for (const char* tag : {"train", "valid", "test"})
    if (!files.count(tag))
      throw ConfigError("data dir '" + dir + "' has no " + tag + " split");

  LoadedData d;
  d.train = load_dataset(files.at("train"), "train");
  d.valid = load_dataset(files.at("valid"), "valid");
  d.test = load_dataset(files.at("test"), "test");
  for (const auto& [tag, path] : files) d.hashes[tag] = file_hash_hex(path);
  if (files.count("unlabeled")) {
    d.unlabeled = load_dataset(files.at("unlabeled"), "unlabeled");
    d.has_unlabeled = true;
  }
  auto no_overlap = [](const Dataset& a, const Dataset& b) {
    const auto dup = split_overlap_check(a, b);
    if (!dup.empty())
      throw ValidationError("graph id '" + dup.front() + "' appears in both the " +
                            a.split_tag + " and " + b.split_tag + " splits");
  };
  no_overlap(d.train, d.valid);
  no_overlap(d.train, d.test);
  no_overlap(d.valid, d.test);
  if (d.has_unlabeled) {
    no_overlap(d.train, d.unlabeled);
    no_overlap(d.valid, d.unlabeled);
    no_overlap(d.test, d.unlabeled);
  }
  return d;
}

void print_region_report(std::ostream& os, const std::string& title, const RegionReport& r) {
  char line[160];
  os << title << "\n";
  std::snprintf(line, sizeof(line), "  %-8s %8s %12s %12s %s\n", "region", "count", "mae", "gm",
                "gm_clamped");
  os << line;
  auto row = [&](const char* region, const RegionStats& s) {
    std::snprintf(line, sizeof(line), "  %-8s %8zu %12.6f %12.6f %zu\n", region, s.count, s.mae,
                  s.gm, s.gm_clamped);
    os << line;
  };
  row("all", r.all);
  if (r.many) row("many", *r.many);
  if (r.medium) row("medium", *r.medium);
  if (r.few) row("few", *r.few);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string spec_path, out_dir;
  uint64_t seed = 1;
};

void cmd_generate(const GenerateArgs& a) {
  const SyntheticSpec spec = load_synthetic_spec(a.spec_path);
  const DatasetManifest m = write_synthetic(spec, a.seed, a.out_dir);
  std::cout << "wrote " << a.out_dir << " (seed " << a.seed << ", spec hash " << m.spec_hash
            << ")\n";
  for (const auto& [tag, info] : m.splits)
    std::cout << "  " << tag << ": " << info.count << " graphs (" << info.file << ")\n";
}

struct TrainArgs {
  std::string config_path, manifest_path, data_dir, out_dir, resume_path;
  uint64_t seed = 0;
  int iterations = 0, epochs = 0, threads = 0;
  bool seed_set = false, iterations_set = false, epochs_set = false, threads_set = false;
  std::vector<std::string> ablates;
};

void cmd_train(const TrainArgs& a) {
  if (!a.config_path.empty() && !a.manifest_path.empty())
    throw ConfigError("give either --config or --from-manifest, not both");
  RunConfig cfg;
  json manifest;
  if (!a.manifest_path.empty()) {
    manifest = parse_json_file(a.manifest_path, "manifest");
    cfg = manifest_config(manifest, a.manifest_path);
  } else if (!a.config_path.empty()) {
    cfg = load_run_config(a.config_path);
  } else {
    throw ConfigError("give --config or --from-manifest");
  }
  if (a.seed_set) cfg.seed = a.seed;
  if (a.iterations_set) cfg.iterations = a.iterations;
  if (a.epochs_set) cfg.epochs = a.epochs;
  if (a.threads_set) cfg.threads = a.threads;
  for (const std::string& name : a.ablates) apply_ablation(cfg, name);
  validate_run_config(cfg);

  const LoadedData d = load_data(a.data_dir);
  if (!a.manifest_path.empty() && manifest.contains("dataset_hashes")) {
    for (const auto& [tag, hash] : manifest.at("dataset_hashes").items()) {
      const auto it = d.hashes.find(tag);
      if (it != d.hashes.end() && it->second != hash.get<std::string>())
        throw ValidationError("split '" + tag + "' differs from the manifest's recorded data (" +
                              it->second + " vs " + hash.get<std::string>() + ")");
    }
  }

  RunInputs inputs;
  inputs.train = &d.train;
  inputs.valid = &d.valid;
  inputs.test = &d.test;
  inputs.unlabeled = d.has_unlabeled ? &d.unlabeled : nullptr;
  inputs.dataset_hashes = d.hashes;
  const RunResult res = run_selftrain(cfg, inputs, a.out_dir, a.resume_path);
  std::cout << slurp(a.out_dir + "/report.txt", "report");
  std::cout << "\nartifacts in " << a.out_dir << " (manifest.json, curve.csv, checkpoints)\n";
  (void)res;
}

struct EvalArgs {
  std::string ckpt_path, data_dir, split = "test";
  int threads = 0;
  bool threads_set = false;
};

void cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt_path);
  json meta;
  try {
    meta = json::parse(ck.meta_json);
  } catch (const json::exception&) {
    throw ConfigError("checkpoint '" + a.ckpt_path + "' carries no embedded config");
  }
  if (!meta.contains("config"))
    throw ConfigError("checkpoint '" + a.ckpt_path + "' carries no embedded config");
  RunConfig cfg = run_config_from_json_text(meta.at("config").dump(),
                                            "checkpoint '" + a.ckpt_path + "' config");
  if (a.threads_set) cfg.threads = a.threads;

  const LoadedData d = load_data(a.data_dir);
  const int data_dim = d.train.labeled.empty() ? 0 : d.train.labeled.front().feature_dim();
  if (ck.model_cfg.feature_dim != data_dim)
    throw ValidationError("checkpoint layer 'encoder.layer0.w0' expects " +
                          std::to_string(ck.model_cfg.feature_dim) +
                          " input features, the dataset provides " + std::to_string(data_dim));
  const GreaModel model = model_from_checkpoint(ck);

  const Dataset* split = nullptr;
  if (a.split == "test") split = &d.test;
  else if (a.split == "valid") split = &d.valid;
  else if (a.split == "train") split = &d.train;
  else throw ConfigError("unknown split '" + a.split + "' (expected train, valid, or test)");
  if (a.split == "train")
    std::cout << "warning: evaluating on the training split measures fit, not "
                 "generalization (leakage)\n";

  const EvalOutput out = evaluate_model(model, cfg, d.train, *split);
  print_region_report(std::cout, "region report (" + a.split + " split)", out.report);
  std::cout << "\nmargins\n";
  char line[160];
  std::snprintf(line, sizeof(line), "  %-8s %8s %14s %12s %12s\n", "interval", "members",
                "min_margin", "error_rate", "proxy");
  std::cout << line;
  for (const MarginRow& row : out.margins.rows) {
    std::snprintf(line, sizeof(line), "  %-8d %8zu %14.6g %12.4f %12.6g\n", row.interval,
                  row.members, row.min_margin, row.error_rate, row.proxy);
    std::cout << line;
  }
  if (out.trend.correlation)
    std::cout << "\ninterval count vs error rank correlation: " << *out.trend.correlation
              << "\n";
}

struct CompareArgs {
  std::vector<std::string> manifest_paths;
  std::string out_dir = ".";
};

void cmd_compare(const CompareArgs& a) {
  std::vector<json> runs;
  for (const std::string& path : a.manifest_paths)
    runs.push_back(parse_json_file(path, "manifest"));
  for (size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].contains("iterations") || runs[i].at("iterations").empty())
      throw ConfigError("manifest '" + a.manifest_paths[i] + "' has no iteration table");
    (void)manifest_config(runs[i], a.manifest_paths[i]);
  }
  // Region definitions must match: same shot thresholds and the same
  // evaluation partition (boundaries and training frequencies).
  auto region_def = [](const json& m) {
    return json{{"t_many", m.at("config").at("t_many")},
                {"t_few", m.at("config").at("t_few")},
                {"eval", m.at("partitions").at("eval")}};
  };
  const json base_def = region_def(runs.front());
  for (size_t i = 1; i < runs.size(); ++i)
    if (region_def(runs[i]) != base_def)
      throw ConfigError("runs are not comparable: '" + a.manifest_paths[i] +
                        "' uses different region definitions (shot thresholds or evaluation "
                        "partition) than '" + a.manifest_paths.front() + "'");

  auto cell = [](const json& test, const char* region, const char* metric) {
    if (!test.contains(region)) return std::string("       -");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8.4f", test.at(region).at(metric).get<double>());
    return std::string(buf);
  };
  std::cout << "final test metrics (mae then gm; delta vs first run)\n";
  char line[240];
  std::snprintf(line, sizeof(line), "%-32s %8s %8s %8s %8s   %8s %8s %8s %8s\n", "run", "all",
                "many", "medium", "few", "all", "many", "medium", "few");
  std::cout << line;
  const json base_test = runs.front().at("iterations").back().at("test");
  for (size_t i = 0; i < runs.size(); ++i) {
    const json test = runs[i].at("iterations").back().at("test");
    std::string name = a.manifest_paths[i];
    if (name.size() > 32) name = "..." + name.substr(name.size() - 29);
    std::snprintf(line, sizeof(line), "%-32s", name.c_str());
    std::cout << line;
    for (const char* metric : {"mae", "gm"}) {
      for (const char* region : {"all", "many", "medium", "few"})
        std::cout << " " << cell(test, region, metric);
      std::cout << "  ";
    }
    std::cout << "\n";
    if (i > 0) {
      std::snprintf(line, sizeof(line), "%-32s", "  delta");
      std::cout << line;
      for (const char* metric : {"mae", "gm"}) {
        for (const char* region : {"all", "many", "medium", "few"}) {
          if (test.contains(region) && base_test.contains(region)) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%+8.4f",
                          test.at(region).at(metric).get<double>() -
                              base_test.at(region).at(metric).get<double>());
            std::cout << " " << buf;
          } else {
            std::cout << "        -";
          }
        }
        std::cout << "  ";
      }
      std::cout << "\n";
    }
  }

  fs::create_directories(a.out_dir);
  for (size_t i = 0; i < runs.size(); ++i) {
    std::string csv = "iteration,split,region,count,mae,gm\n";
    for (const auto& rec : runs[i].at("iterations")) {
      for (const char* split : {"valid", "test"}) {
        for (const char* region : {"all", "many", "medium", "few"}) {
          if (!rec.at(split).contains(region)) continue;
          const json& s = rec.at(split).at(region);
          char buf[96];
          std::snprintf(buf, sizeof(buf), "%d,%s,%s,%zu,%.17g,%.17g\n",
                        rec.at("iteration").get<int>(), split, region,
                        s.at("count").get<size_t>(), s.at("mae").get<double>(),
                        s.at("gm").get<double>());
          csv += buf;
        }
      }
    }
    const std::string path = a.out_dir + "/curve_run" + std::to_string(i) + ".csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << csv;
    std::cout << "curve data: " << path << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised self-training for imbalanced graph regression"};
  app.require_subcommand(1);
  const char* env_data = std::getenv("SGIR_DATA_DIR");
  const std::string default_data = env_data ? env_data : "";

  GenerateArgs gen;
  CLI::App* cgen = app.add_subcommand("generate", "generate a synthetic benchmark dataset");
  cgen->add_option("--spec", gen.spec_path, "generator spec (json)")->required();
  cgen->add_option("--out", gen.out_dir, "output directory")->required();
  cgen->add_option("--seed", gen.seed, "generator seed");

  TrainArgs tr;
  tr.data_dir = default_data;
  CLI::App* ctrain = app.add_subcommand("train", "run the self-training loop");
  ctrain->add_option("--config", tr.config_path, "run config (json)");
  ctrain->add_option("--from-manifest", tr.manifest_path,
                     "rerun the configuration recorded in a run manifest");
  ctrain->add_option("--data", tr.data_dir, "dataset directory (default $SGIR_DATA_DIR)");
  ctrain->add_option("--out", tr.out_dir, "output directory for run artifacts")->required();
  ctrain->add_option("--resume", tr.resume_path, "continue from a checkpoint file");
  CLI::Option* oseed = ctrain->add_option("--seed", tr.seed, "override config seed");
  CLI::Option* oiter = ctrain->add_option("--iterations", tr.iterations,
                                          "override iteration count (0 = evaluate only)");
  CLI::Option* oep = ctrain->add_option("--epochs", tr.epochs, "override epochs per iteration");
  CLI::Option* othr = ctrain->add_option("--threads", tr.threads,
                                         "scoring worker count (1 = reference)");
  ctrain->add_option("--ablate", tr.ablates,
                     "disable a component: no-sigma, no-sampling, no-mixup, no-unlabeled");

  EvalArgs ev;
  ev.data_dir = default_data;
  CLI::App* ceval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  ceval->add_option("--ckpt", ev.ckpt_path, "checkpoint file")->required();
  ceval->add_option("--data", ev.data_dir, "dataset directory (default $SGIR_DATA_DIR)");
  ceval->add_option("--split", ev.split, "train, valid, or test (default test)");
  CLI::Option* ethr = ceval->add_option("--threads", ev.threads, "scoring worker count");

  CompareArgs cm;
  CLI::App* ccomp = app.add_subcommand("compare", "compare run manifests side by side");
  ccomp->add_option("manifests", cm.manifest_paths, "run manifest files")
      ->required()
      ->expected(2, -1);
  ccomp->add_option("--out", cm.out_dir, "directory for per-run curve csv files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  tr.seed_set = oseed->count() > 0;
  tr.iterations_set = oiter->count() > 0;
  tr.epochs_set = oep->count() > 0;
  tr.threads_set = othr->count() > 0;
  ev.threads_set = ethr->count() > 0;

  if (cgen->parsed()) return guarded([&] { cmd_generate(gen); });
  if (ctrain->parsed()) return guarded([&] { cmd_train(tr); });
  if (ceval->parsed()) return guarded([&] { cmd_eval(ev); });
  if (ccomp->parsed()) return guarded([&] { cmd_compare(cm); });
  return 1;
}
