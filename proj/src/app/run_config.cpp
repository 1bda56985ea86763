#include "edgefield/app/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

namespace edgefield::app {

using nlohmann::json;

json to_json(const RunConfig& c) {
  const RefineConfig& r = c.refine;
  json j;
  j["preset"] = c.preset;
  j["scene"] = c.scene.string();
  j["masks"] = c.masks.string();
  j["seed"] = c.seed;
  j["output"] = c.output.string();
  j["threads"] = c.threads;
  j["band"] = c.band;
  j["noise"] = {{"jitter_px", c.noise.jitter_px}, {"flip_prob", c.noise.flip_prob}};
  j["taus"] = c.taus;
  j["variants"] = c.variants;
  j["boundary"] = {{"tau", r.tau},
                   {"raw_threshold", r.raw_threshold},
                   {"occlusion_aware", r.signals.occlusion_aware},
                   {"depth_margin", r.signals.depth_margin},
                   {"delta", r.delta},
                   {"grid_rows", r.grid_rows},
                   {"grid_cols", r.grid_cols},
                   {"samples_per_ray", r.samples_per_ray},
                   {"alpha", r.alpha_range},
                   {"eps", r.eps}};
  j["rbf"] = {{"k_neighbors", r.rbf.k_neighbors}, {"kernel_width", r.rbf.kernel_width}};
  j["hash"] = {{"levels", r.hash.levels},
               {"log2_table_size", r.hash.log2_table_size},
               {"features_per_level", r.hash.features_per_level},
               {"base_resolution", r.hash.base_resolution},
               {"growth", r.hash.growth},
               {"nearest_corner", r.hash.nearest_corner},
               {"primes", r.hash.primes}};
  j["nerf"] = {{"width", r.nerf_width}, {"layers", r.nerf_layers}};
  j["loss"] = {{"w_alpha", r.weights.w_alpha},         {"w_var", r.weights.w_var},
               {"lambda_mask", r.weights.lambda_mask}, {"lambda_cont", r.weights.lambda_cont},
               {"lambda_smth", r.weights.lambda_smth}, {"eps_mask", r.weights.eps_mask},
               {"patch", r.weights.patch},             {"cont_neighbors", r.cont_neighbors}};
  j["train"] = {{"lr", r.adam.lr},
                {"beta1", r.adam.beta1},
                {"beta2", r.adam.beta2},
                {"adam_eps", r.adam.eps},
                {"iterations", r.iterations},
                {"refresh_every", r.refresh_every},
                {"early_stop_window", r.early_stop_window},
                {"early_stop_tol", r.early_stop_tol},
                {"checkpoint_every", r.checkpoint_every}};
  j["ablation"] = {{"nerf", r.ablation.nerf},
                   {"rbf", r.ablation.rbf},
                   {"mrhe", r.ablation.mrhe},
                   {"align", r.ablation.align},
                   {"smth", r.ablation.smth}};
  j["freeze"] = {{"labels", r.freeze.labels},     {"colors", r.freeze.colors}, {"opacities", r.freeze.opacities},
                 {"features", r.freeze.features}, {"hash", r.freeze.hash},     {"nerf", r.freeze.nerf}};
  return j;
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw InvalidArgument("config: unknown key '" + where + k + "'");
}

}  // namespace

RunConfig merge_json(const json& j, RunConfig c) {
  try {
    check_keys(j, {"preset", "scene", "masks", "seed", "output", "threads", "band", "noise", "taus", "variants",
                   "boundary", "rbf", "hash", "nerf", "loss", "train", "ablation", "freeze", "version", "config"},
               "");
    if (j.contains("config")) return merge_json(j.at("config"), std::move(c));
    RefineConfig& r = c.refine;
    take(j, "preset", c.preset);
    if (j.contains("scene")) c.scene = j.at("scene").get<std::string>();
    if (j.contains("masks")) c.masks = j.at("masks").get<std::string>();
    take(j, "seed", c.seed);
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    take(j, "threads", c.threads);
    take(j, "band", c.band);
    take(j, "taus", c.taus);
    take(j, "variants", c.variants);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check_keys(n, {"jitter_px", "flip_prob"}, "noise.");
      take(n, "jitter_px", c.noise.jitter_px);
      take(n, "flip_prob", c.noise.flip_prob);
    }
    if (j.contains("boundary")) {
      const auto& b = j.at("boundary");
      check_keys(b, {"tau", "raw_threshold", "occlusion_aware", "depth_margin", "delta", "grid_rows", "grid_cols", "samples_per_ray", "alpha", "eps"},
                 "boundary.");
      take(b, "tau", r.tau);
      take(b, "raw_threshold", r.raw_threshold);
      take(b, "occlusion_aware", r.signals.occlusion_aware);
      take(b, "depth_margin", r.signals.depth_margin);
      take(b, "delta", r.delta);
      take(b, "grid_rows", r.grid_rows);
      take(b, "grid_cols", r.grid_cols);
      take(b, "samples_per_ray", r.samples_per_ray);
      take(b, "alpha", r.alpha_range);
      take(b, "eps", r.eps);
    }
    if (j.contains("rbf")) {
      const auto& b = j.at("rbf");
      check_keys(b, {"k_neighbors", "kernel_width"}, "rbf.");
      take(b, "k_neighbors", r.rbf.k_neighbors);
      take(b, "kernel_width", r.rbf.kernel_width);
    }
    if (j.contains("hash")) {
      const auto& b = j.at("hash");
      check_keys(b, {"levels", "log2_table_size", "features_per_level", "base_resolution", "growth",
                     "nearest_corner", "primes"},
                 "hash.");
      take(b, "levels", r.hash.levels);
      take(b, "log2_table_size", r.hash.log2_table_size);
      take(b, "features_per_level", r.hash.features_per_level);
      take(b, "base_resolution", r.hash.base_resolution);
      take(b, "growth", r.hash.growth);
      take(b, "nearest_corner", r.hash.nearest_corner);
      take(b, "primes", r.hash.primes);
    }
    if (j.contains("nerf")) {
      const auto& b = j.at("nerf");
      check_keys(b, {"width", "layers"}, "nerf.");
      take(b, "width", r.nerf_width);
      take(b, "layers", r.nerf_layers);
    }
    if (j.contains("loss")) {
      const auto& b = j.at("loss");
      check_keys(b, {"w_alpha", "w_var", "lambda_mask", "lambda_cont", "lambda_smth", "eps_mask", "patch",
                     "cont_neighbors"},
                 "loss.");
      take(b, "w_alpha", r.weights.w_alpha);
      take(b, "w_var", r.weights.w_var);
      take(b, "lambda_mask", r.weights.lambda_mask);
      take(b, "lambda_cont", r.weights.lambda_cont);
      take(b, "lambda_smth", r.weights.lambda_smth);
      take(b, "eps_mask", r.weights.eps_mask);
      take(b, "patch", r.weights.patch);
      take(b, "cont_neighbors", r.cont_neighbors);
    }
    if (j.contains("train")) {
      const auto& b = j.at("train");
      check_keys(b, {"lr", "beta1", "beta2", "adam_eps", "iterations", "refresh_every", "early_stop_window",
                     "early_stop_tol", "checkpoint_every"},
                 "train.");
      take(b, "lr", r.adam.lr);
      take(b, "beta1", r.adam.beta1);
      take(b, "beta2", r.adam.beta2);
      take(b, "adam_eps", r.adam.eps);
      take(b, "iterations", r.iterations);
      take(b, "refresh_every", r.refresh_every);
      take(b, "early_stop_window", r.early_stop_window);
      take(b, "early_stop_tol", r.early_stop_tol);
      take(b, "checkpoint_every", r.checkpoint_every);
    }
    if (j.contains("ablation")) {
      const auto& b = j.at("ablation");
      check_keys(b, {"nerf", "rbf", "mrhe", "align", "smth"}, "ablation.");
      take(b, "nerf", r.ablation.nerf);
      take(b, "rbf", r.ablation.rbf);
      take(b, "mrhe", r.ablation.mrhe);
      take(b, "align", r.ablation.align);
      take(b, "smth", r.ablation.smth);
    }
    if (j.contains("freeze")) {
      const auto& b = j.at("freeze");
      check_keys(b, {"labels", "colors", "opacities", "features", "hash", "nerf"}, "freeze.");
      take(b, "labels", r.freeze.labels);
      take(b, "colors", r.freeze.colors);
      take(b, "opacities", r.freeze.opacities);
      take(b, "features", r.freeze.features);
      take(b, "hash", r.freeze.hash);
      take(b, "nerf", r.freeze.nerf);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.refine.seed = c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot read config file " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return merge_json(j, std::move(base));
}

void apply_environment(RunConfig& cfg) {
  if (const char* s = std::getenv("EDGEFIELD_SEED"); s && *s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw InvalidArgument("EDGEFIELD_SEED must be a non-negative integer");
    cfg.seed = v;
  }
  cfg.refine.seed = cfg.seed;
}

void validate(const RunConfig& c) {
  const RefineConfig& r = c.refine;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
  };
  require(r.tau > 0.0 && r.tau < 1.0, "tau must lie in (0, 1)");
  require(r.delta >= 0.0, "delta must be non-negative");
  require(r.signals.depth_margin >= 0.0, "depth_margin must be non-negative");
  require(r.grid_rows >= 1 && r.grid_cols >= 1, "grid size must be at least 1");
  require(r.samples_per_ray >= 2, "samples per ray must be at least 2");
  require(r.alpha_range > 0.0 && r.eps > 0.0, "depth window parameters must be positive");
  require(r.rbf.k_neighbors >= 1 && r.rbf.kernel_width > 0.0, "invalid RBF settings");
  require(r.hash.levels >= 1 && r.hash.log2_table_size >= 1 && r.hash.log2_table_size <= 30 &&
              r.hash.features_per_level >= 1 && r.hash.base_resolution >= 1 && r.hash.growth > 0.0,
          "invalid hash encoding settings");
  require(r.nerf_width >= 1 && r.nerf_layers >= 1, "invalid network size");
  require(r.adam.lr > 0.0, "learning rate must be positive");
  require(r.iterations >= 0, "iterations must be non-negative");
  require(r.weights.w_alpha >= 0 && r.weights.w_var >= 0 && r.weights.lambda_mask >= 0 &&
              r.weights.lambda_cont >= 0 && r.weights.lambda_smth >= 0 && r.weights.eps_mask >= 0,
          "loss weights must be non-negative");
  require(c.noise.jitter_px >= 0.0 && c.noise.flip_prob >= 0.0 && c.noise.flip_prob <= 1.0, "invalid noise settings");
  for (double t : c.taus) require(t > 0.0 && t < 1.0, "every tau must lie in (0, 1)");
  for (const auto& v : c.variants) {
    const auto& known = known_variants();
    require(std::find(known.begin(), known.end(), v) != known.end(), "unknown ablation variant");
  }
}

void write_provenance(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json j = {{"version", kVersion}, {"config", to_json(cfg)}};
  std::ofstream f(dir / "run_config.json");
  if (!f) throw Error("cannot write " + (dir / "run_config.json").string());
  f << j.dump(2) << "\n";
}

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v{"full", "no_align_smth", "no_rbf", "no_mrhe", "threshold_only"};
  return v;
}

RefineConfig variant_config(const RefineConfig& base, const std::string& variant) {
  RefineConfig r = base;
  if (variant == "full") return r;
  if (variant == "no_align_smth") {
    r.ablation.align = false;
    r.ablation.smth = false;
  } else if (variant == "no_rbf") {
    r.ablation.rbf = false;
  } else if (variant == "no_mrhe") {
    r.ablation.mrhe = false;
  } else if (variant == "threshold_only") {
    r.ablation.nerf = false;
    r.ablation.rbf = false;
    r.ablation.mrhe = false;
  } else {
    throw InvalidArgument("unknown ablation variant '" + variant + "'");
  }
  return r;
}

}  // namespace edgefield::app
