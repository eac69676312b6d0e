#pragma once

#include <stdexcept>
#include <string>

#include "merr/dataset.hpp"
#include "merr/model.hpp"

namespace merr::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All pipeline knobs. The JSON schema mirrors this struct; unknown keys are
// rejected.
struct RunConfig {
  dataset::GenConfig gen;            // mesh grids, material field, load, count, seed
  int n_test = 1000;
  model::ModelDims dims;             // input/output widths derived from grids
  model::TrainConfig train;
  model::LossFlags flags{true, true};
  int eval_bins = 101;
  int eval_sample_index = 0;
  int mc_passes = 2000;
  std::string output_dir = "out";
};

// Full-scale defaults (10,000 samples, 9,000/1,000 split, 300 epochs).
RunConfig default_config();

// Named presets: "full" and "desk" (2,000 samples, 1,800/200, H2 = 512,
// 60 epochs, fixed seed).
RunConfig preset(const std::string& name);

// Overlay a JSON document onto base; validates the schema and value ranges.
RunConfig load_json(const std::string& text, RunConfig base);
RunConfig load_file(const std::string& path, RunConfig base);

std::string to_json(const RunConfig& cfg);

// Derive model widths from the mesh grids and mirror the master seed into
// the training seed. Call after all overlays.
void finalize(RunConfig& cfg);

}  // namespace merr::config
