#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgir/model.hpp"

namespace sgir {

// Versioned binary parameter snapshot with shape headers.  Optionally carries
// optimizer state and a free-form JSON meta section (iteration counter,
// metric history) so an interrupted run can resume exactly.
struct Checkpoint {
  ModelConfig model_cfg;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> params;
  bool has_adam = false;
  long adam_t = 0;
  std::vector<Eigen::MatrixXd> adam_m, adam_v;
  int completed_iterations = 0;
  std::string meta_json;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot_model(GreaModel& model, const Adam<Real>* adam, int completed_iterations,
                          std::string meta_json = "");

// Copies checkpoint tensors into a model of matching architecture; shape or
// name mismatches raise ValidationError naming the offending layer.  adam may
// be null when only parameters are wanted.
void apply_checkpoint(const Checkpoint& ck, GreaModel& model, Adam<Real>* adam);

// Convenience: build a fresh model directly from a checkpoint.
GreaModel model_from_checkpoint(const Checkpoint& ck);

}  // namespace sgir
