#pragma once

#include <filesystem>
#include <string>

#include "edgefield/scene.hpp"

namespace edgefield {

/// Scene file: UTF-8 JSON with top-level keys `gaussians`, `cameras`,
/// `objects` and `noise`. Doubles use the shortest round-trip-exact form, so
/// no precision is lost on reload.
std::string scene_to_json(const SyntheticScene& scene);

/// Parses a scene file and recomputes its ground-truth masks.
SyntheticScene scene_from_json(const std::string& text);

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& path);

}  // namespace edgefield
