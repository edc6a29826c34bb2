#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgir/checkpoint.hpp"
#include "sgir/config.hpp"
#include "sgir/graph.hpp"
#include "sgir/metrics.hpp"
#include "sgir/model.hpp"

namespace sgir {

// One row of the metric history.  Entry 0 describes the freshly initialized
// model (iteration -1, no training); entry k+1 describes the model after
// self-training iteration k, so the history always has completed + 1 rows.
struct IterationRecord {
  int iteration = -1;
  std::vector<Real> epoch_losses;  // mean optimizer-step loss per epoch
  Real best_valid_mae = 0.0;       // the all-region validation MAE carried forward
  RegionReport valid;
  RegionReport test;
  size_t gconf_size = 0;  // pseudo-labeled graphs trained on this iteration
  size_t haug_size = 0;   // augmented latent examples trained on this iteration
  Real tau = 0.0;         // confidence threshold (0 when no scoring happened)
  std::optional<Real> pseudo_mae;           // vs hidden truths when all carried
  std::optional<Real> bound_correlation;    // test interval count-vs-error trend
};

struct RunInputs {
  const Dataset* train = nullptr;      // labeled, imbalanced
  const Dataset* valid = nullptr;      // labeled
  const Dataset* test = nullptr;       // labeled
  const Dataset* unlabeled = nullptr;  // optional pool
  std::map<std::string, std::string> dataset_hashes;  // split tag -> file hash
};

struct RunResult {
  std::vector<IterationRecord> history;
  MarginDiagnostics final_margins;  // test split, evaluation partition
  BoundTrend final_trend;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> final_params;
  std::string manifest_json;
};

// Runs the full self-training loop: iteration 0 trains on the labeled set
// alone; every later iteration first rebuilds the confidence threshold,
// the pseudo-label selection, and the mixup augmentation from the current
// model, then trains on the expanded set.  Model and optimizer state persist
// across iterations; within an iteration the best-validation snapshot is
// carried forward.  Deterministic in cfg.seed for any thread count (threads
// only parallelize read-only scoring).
//
// out_dir empty = no artifacts.  Otherwise writes per-iteration dumps,
// checkpoints, curve/report files, and the run manifest.  resume_from names a
// checkpoint written by a previous run with the same config and data; the
// continuation reproduces the uninterrupted run exactly.
RunResult run_selftrain(const RunConfig& cfg, const RunInputs& data, const std::string& out_dir,
                        const std::string& resume_from = "");

// Plain supervised training of the rationale model: exactly what self-training
// iteration 0 does, sharing its code path and rng streams, so a degenerate
// run (no unlabeled pool, no augmentation, one iteration) is bit-identical.
struct SupervisedResult {
  std::vector<Real> epoch_losses;
  Real best_valid_mae = 0.0;
  GreaModel model;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> final_params;
};

SupervisedResult train_grea_supervised(const RunConfig& cfg, const Dataset& train,
                                       const Dataset& valid);

// Region-report + margin evaluation of an existing model on one labeled
// split, using partitions rebuilt from the training labels (the same routing
// a training run uses).
struct EvalOutput {
  RegionReport report;
  MarginDiagnostics margins;
  BoundTrend trend;
};

EvalOutput evaluate_model(const GreaModel& model, const RunConfig& cfg, const Dataset& train,
                          const Dataset& split);

}  // namespace sgir
