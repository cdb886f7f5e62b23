// Stage configuration and the plain-text config file format: flat key = value
// lines grouped by [stage.<name>] headers.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddr/util.hpp"

namespace ddr {

struct StageConfig {
  int data_order = 4;
  int control_order = 2;
  int label_order = 5;
  std::size_t n_labels = 600;
  double gamma = 0.7;
  double lambda = 1.5;
  int r = 1;
  std::vector<std::size_t> fsn_channels{600};
  std::size_t c1 = 32;
  int crf_iterations = 5;
  int epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;

  void validate() const;
};

struct PipelineConfig {
  double radius = 100.0;
  StageConfig rotation;
  StageConfig coarse;
  StageConfig fine;
};

// Hyperparameters quoted for the full-scale experiments (order-6 data).
PipelineConfig paper_profile();

// Small profile for desk-scale runs: order-4 data, coarse control order 1
// with 150 labels from order 4, fine control order 2 with 300 labels from
// order 5.
PipelineConfig desk_profile();

PipelineConfig parse_config(std::istream& is);
PipelineConfig parse_config_file(const std::string& path);
std::string format_config(const PipelineConfig& config);

// DDR_SEED, when set, overrides every stage seed.
void apply_env_seed(PipelineConfig& config);

}  // namespace ddr
