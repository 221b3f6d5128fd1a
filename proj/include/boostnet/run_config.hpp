#pragma once

#include <string>

#include "boostnet/dataset.hpp"
#include "boostnet/model.hpp"
#include "boostnet/trainer.hpp"

namespace boostnet {

// A full experiment description parsed from a flat key = value file.
// Unknown keys are errors; config_version must be 1.
struct RunConfig {
  ModelConfig model;
  TrainingConfig training;
  DatasetSpec dataset;
  double holdout_fraction = 0.2;

  void validate() const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace boostnet
