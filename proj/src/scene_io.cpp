#include "edgefield/scene_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace edgefield {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("scene file: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::string scene_to_json(const SyntheticScene& scene) {
  json root;
  json gaussians = json::array();
  for (const Gaussian& g : scene.gaussians) {
    gaussians.push_back({
        {"mu", vec(g.mu)},
        {"scale", vec(g.scale)},
        {"rotation", {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()}},
        {"opacity", g.opacity},
        {"color", vec(g.color)},
        {"mask_label", g.mask_label},
        {"feature", vec(g.feature)},
        {"object_id", g.object_id},
    });
  }
  json cameras = json::array();
  for (const Camera& c : scene.cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({c.rot(r, 0), c.rot(r, 1), c.rot(r, 2)});
    cameras.push_back({{"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"rot", rot},
                       {"origin", vec(c.origin)},
                       {"width", c.width},
                       {"height", c.height}});
  }
  json objects = json::array();
  for (int id = 0; id < scene.object_count(); ++id) {
    objects.push_back({{"id", id}, {"name", scene.object_names[id]}, {"target", id == scene.target_object}});
  }
  root["gaussians"] = std::move(gaussians);
  root["cameras"] = std::move(cameras);
  root["objects"] = std::move(objects);
  root["noise"] = {{"jitter_px", scene.noise.jitter_px}, {"flip_prob", scene.noise.flip_prob}, {"seed", scene.seed}};
  return root.dump(1) + "\n";
}

SyntheticScene scene_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("scene file: ") + e.what());
  }
  for (const char* key : {"gaussians", "cameras", "objects", "noise"})
    if (!root.contains(key)) throw Error(std::string("scene file: missing key '") + key + "'");

  SyntheticScene scene;
  try {
    for (const json& j : root["gaussians"]) {
      Gaussian g;
      g.mu = vec3(j.at("mu"));
      g.scale = vec3(j.at("scale"));
      const json& q = j.at("rotation");
      g.rotation = Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                                      q.at(3).get<double>());
      g.opacity = j.at("opacity").get<double>();
      g.color = vec3(j.at("color"));
      g.mask_label = j.at("mask_label").get<double>();
      const auto feat = j.at("feature").get<std::vector<double>>();
      g.feature = Eigen::Map<const Eigen::VectorXd>(feat.data(), static_cast<Eigen::Index>(feat.size()));
      g.object_id = j.at("object_id").get<int>();
      validate(g);
      scene.gaussians.push_back(std::move(g));
    }
    for (const json& j : root["cameras"]) {
      Camera c;
      c.fx = j.at("fx").get<double>();
      c.fy = j.at("fy").get<double>();
      c.cx = j.at("cx").get<double>();
      c.cy = j.at("cy").get<double>();
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) c.rot(r, k) = j.at("rot").at(r).at(k).get<double>();
      c.origin = vec3(j.at("origin"));
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      validate(c);
      scene.cameras.push_back(c);
    }
    scene.object_names.clear();
    for (const json& j : root["objects"]) {
      const int id = j.at("id").get<int>();
      if (id != static_cast<int>(scene.object_names.size())) throw Error("scene file: object ids must be 0..n-1");
      scene.object_names.push_back(j.at("name").get<std::string>());
      if (j.value("target", false)) scene.target_object = id;
    }
    const json& noise = root["noise"];
    scene.noise.jitter_px = noise.at("jitter_px").get<double>();
    scene.noise.flip_prob = noise.at("flip_prob").get<double>();
    scene.seed = noise.value("seed", std::uint64_t{7});
  } catch (const json::exception& e) {
    throw Error(std::string("scene file: ") + e.what());
  }
  for (const Gaussian& g : scene.gaussians)
    if (g.object_id >= scene.object_count()) throw Error("scene file: gaussian references unknown object");
  if (scene.target_object < 1 || scene.target_object >= scene.object_count())
    throw Error("scene file: no valid target object");
  scene.gt_masks = compute_gt_masks(scene.gaussians, scene.cameras, scene.object_count());
  return scene;
}

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << scene_to_json(scene);
}

SyntheticScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

}  // namespace edgefield
