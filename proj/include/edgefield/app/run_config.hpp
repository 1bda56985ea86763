#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "edgefield/optim.hpp"
#include "edgefield/scene.hpp"
#include "json.hpp"

namespace edgefield::app {

/// Everything a command needs, resolved as defaults <- config file <- flags.
struct RunConfig {
  std::string preset = "two-spheres";
  /// Scene JSON to load instead of generating the preset.
  std::filesystem::path scene;
  /// Directory holding mask_<view>.pgm input masks; defaults to the scene's directory.
  std::filesystem::path masks;
  std::uint64_t seed = 7;
  std::filesystem::path output = "out";
  unsigned threads = 0;
  int band = 0;
  NoiseSpec noise{2.0, 0.2};
  std::vector<double> taus{0.3, 0.6, 0.7, 0.9};
  std::vector<std::string> variants{"full", "no_align_smth", "no_rbf", "no_mrhe", "threshold_only"};
  RefineConfig refine;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
RunConfig merge_json(const nlohmann::json& j, RunConfig base);
RunConfig load_config(const std::filesystem::path& path, RunConfig base);

/// EDGEFIELD_SEED, when set, replaces the seed.
void apply_environment(RunConfig& cfg);

/// Range checks; throws InvalidArgument.
void validate(const RunConfig& cfg);

/// Writes run_config.json (version plus resolved configuration) into the output directory.
void write_provenance(const RunConfig& cfg, const std::filesystem::path& dir);

/// Applies a named ablation variant to the refinement settings.
RefineConfig variant_config(const RefineConfig& base, const std::string& variant);
const std::vector<std::string>& known_variants();

}  // namespace edgefield::app
