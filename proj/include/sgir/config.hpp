#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgir/common.hpp"
#include "sgir/confidence.hpp"
#include "sgir/mixup.hpp"

namespace sgir {

// Every hyperparameter of a training run.  Defaults are usable as-is at desk
// scale; load_run_config reports all validation failures at once.  The config
// is serialized verbatim into the run manifest so no silent choice exists.
struct RunConfig {
  uint64_t seed = 1;
  int iterations = 5;      // self-training iterations T (0 = evaluate initial model only)
  int epochs = 100;        // optimizer epochs per iteration
  int batch_size = 32;
  Real lr = 1e-3;
  int hidden_dim = 64;
  int gin_layers = 3;

  // Label-space partitions.  A count builds an equal-width partition over the
  // training label range; an explicit boundary list overrides the count (and
  // conflicts with giving the count in the same file).
  int c_pseudo = 100;   // intervals for pseudo-label selection
  int c_mixup = 1000;   // intervals for mixup anchors
  int eval_bins = 20;   // intervals for region reports and margin diagnostics
  std::vector<Real> pseudo_boundaries;
  std::vector<Real> mixup_boundaries;
  std::vector<Real> eval_boundaries;

  // Confidence filter.
  Real tau_pct = 80.0;  // percentile of labeled-set confidence kept as threshold
  // Reverse-sampling frequencies come from the labeled training set only by
  // default; this folds the previous iteration's pseudo-labels into the count.
  bool rates_include_pseudo = false;
  ConfidenceMethod confidence = ConfidenceMethod::GRation;
  int dropout_samples = 8;   // stochastic passes (dropout method)
  Real dropout_rate = 0.2;   // dropout method only
  int env_batch = 32;        // environment pool size (gration method)

  // Label-anchored mixup.
  Real beta_mix = 2.0;            // Beta(1, beta) shape for the mixing weight
  long n_aug = -1;                // augmentation budget per iteration; -1 = |labeled train|
  MixSource z_source = MixSource::Imb;           // anchor representation pool
  MixSource h_source = MixSource::ImbUnlabeled;  // real partner pool

  // Loss.
  Real gamma_size = 0.5;   // target mean gate activation
  Real temperature = 1.0;  // batch-reweighting temperature t
  Real regu_coeff = 1.0;   // gate size regularizer weight

  // Shot regions.
  long t_many = 100;  // interval is many-shot iff training frequency >= t_many
  long t_few = 20;    // few-shot iff frequency < t_few

  int threads = 1;      // 1 = deterministic reference execution
  int valid_every = 1;  // validation cadence in epochs within an iteration

  // Component switch-offs for ablation rows.
  bool ablate_no_sigma = false;      // keep every pseudo-label (skip confidence filter)
  bool ablate_no_sampling = false;   // reverse-sampling rates forced to 1
  bool ablate_no_mixup = false;      // no augmented examples
  bool ablate_no_unlabeled = false;  // drop the unlabeled pool entirely
};

MixSource parse_mix_source(const std::string& name);
ConfidenceMethod parse_confidence_method(const std::string& name);

// Parses and validates; throws ConfigError listing every problem found.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text, const std::string& origin);

// Canonical serialization (sorted keys); hash of this text identifies the run
// configuration in manifests.
std::string run_config_json(const RunConfig& cfg);
std::string run_config_hash(const RunConfig& cfg);

// Switches one component off by name: no-sigma, no-sampling, no-mixup, or
// no-unlabeled.  Throws ConfigError on unknown names.
void apply_ablation(RunConfig& cfg, const std::string& name);

// Full validation used by both the loader and programmatic construction.
void validate_run_config(const RunConfig& cfg);

}  // namespace sgir
