#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "edgefield/app/csv.hpp"
#include "edgefield/app/run_config.hpp"
#include "edgefield/metrics.hpp"
#include "edgefield/optim.hpp"

namespace edgefield::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitBadArgs = 2,
  kExitPipeline = 3,
  kExitAcceptance = 4,
};

/// Scene, the (noisy) input masks and the ground-truth target masks.
struct Inputs {
  SyntheticScene scene;
  std::vector<Mask> masks;
  std::vector<Mask> gt;
};

/// Loads cfg.scene (with masks from cfg.masks or the scene's directory), or
/// generates cfg.preset with cfg.noise and corrupts its target masks.
Inputs load_inputs(const RunConfig& cfg);

std::filesystem::path mask_path(const std::filesystem::path& dir, const std::string& stem, std::size_t view);

struct PipelineResult {
  std::vector<Gaussian> baseline;  // thresholded labels
  RefineResult refined;
  SegMetrics before;
  SegMetrics after;
};

PipelineResult run_pipeline(const Inputs& in, const RunConfig& cfg, const RefineConfig& refine_cfg,
                            const std::function<void(const RefineCheckpoint&)>& on_checkpoint = {});

/// Per-view rows plus a "mean" row per stage (views averaged first).
CsvTable metrics_table(const std::vector<std::pair<std::string, SegMetrics>>& stages);

void cmd_generate(const RunConfig& cfg, std::ostream& log);
void cmd_segment(const RunConfig& cfg, std::ostream& log);

struct RefineSummary {
  SegMetrics before;
  SegMetrics after;
};

RefineSummary cmd_refine(const RunConfig& cfg, std::ostream& log);
/// Returns the table written to sweep_tau.csv.
CsvTable cmd_sweep_tau(const RunConfig& cfg, std::ostream& log);
/// Returns the table written to ablation.csv.
CsvTable cmd_ablate(const RunConfig& cfg, std::ostream& log);

struct EvalArgs {
  std::filesystem::path scene;  // ground truth from the scene's target masks
  std::vector<std::filesystem::path> gt;  // or explicit ground-truth PGMs
  std::vector<std::filesystem::path> pred;
  std::filesystem::path output = "out";
  int band = 0;
};

SegMetrics cmd_eval(const EvalArgs& args, std::ostream& log);

}  // namespace edgefield::app
