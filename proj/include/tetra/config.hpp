#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tetra/dmad.hpp"
#include "tetra/synthdata.hpp"
#include "tetra/trainer.hpp"

namespace tetra {

struct EvalConfig {
  std::vector<double> fmr_targets{1e-3, 1e-4, 1e-5};
  std::optional<std::size_t> nonmated_cap;
  std::uint64_t seed = 99;
};

// One declarative run document: universe, protocol, training, detector and
// evaluation settings. Versioned schema; unknown keys are rejected.
struct RunConfig {
  UniverseConfig universe = default_universe_config();
  SplitProtocol protocol;
  TrainConfig train;
  DmadConfig dmad;
  std::uint64_t dmad_seed = 7;
  EvalConfig eval;
};

RunConfig default_run_config();

// Parses and validates a JSON run config (schema version 1). Any structural
// problem, type mismatch or unknown key raises ConfigInvalid.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Fully resolved config echo, suitable for provenance and re-running.
std::string run_config_to_json(const RunConfig& config);
void save_run_config(const RunConfig& config, const std::string& path);

}  // namespace tetra
