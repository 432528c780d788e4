#include "cargopatch/scene_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cargopatch/error.hpp"

namespace cargopatch {

using nlohmann::json;

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

const json& require(const json& j, const char* key, const std::string& parent) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(parent + key, "missing field: " + parent + key);
  return *it;
}

double number_at(const json& j, const char* key, const std::string& parent) {
  const json& v = require(j, key, parent);
  if (!v.is_number()) throw ParseError(parent + key, "expected number at " + parent + key);
  return v.get<double>();
}

Vec3 vec3_at(const json& j, const char* key, const std::string& parent) {
  const json& v = require(j, key, parent);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw ParseError(parent + key, "expected [x,y,z] at " + parent + key);
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["schema_version"] = 1;
  j["trailer"] = {
      {"interior_length", scene.trailer.interior_length},
      {"interior_width", scene.trailer.interior_width},
      {"interior_height", scene.trailer.interior_height},
      {"wall_albedo", vec3_to_json(scene.trailer.wall_albedo)},
      {"floor_albedo", vec3_to_json(scene.trailer.floor_albedo)},
      {"ceiling_albedo", vec3_to_json(scene.trailer.ceiling_albedo)},
  };
  json cargo = json::array();
  for (const auto& box : scene.cargo)
    cargo.push_back({{"min_corner", vec3_to_json(box.min_corner)},
                     {"size", vec3_to_json(box.size)},
                     {"albedo", vec3_to_json(box.albedo)}});
  j["cargo"] = std::move(cargo);
  json lights = json::array();
  for (const auto& light : scene.lights)
    lights.push_back({{"position", vec3_to_json(light.position)},
                      {"intensity", vec3_to_json(light.intensity)}});
  j["lights"] = std::move(lights);
  j["camera"] = {
      {"position", vec3_to_json(scene.camera.position)},
      {"look_at", vec3_to_json(scene.camera.look_at)},
      {"up", vec3_to_json(scene.camera.up)},
      {"vfov", scene.camera.vfov},
      {"width", scene.camera.width},
      {"height", scene.camera.height},
  };
  j["label"] = static_cast<int>(scene.label);
  j["seed"] = scene.seed;
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid json: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("", "scene file must hold a json object");
  const json& version = require(j, "schema_version", "");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw ParseError("schema_version", "unsupported schema_version");

  Scene scene;
  const json& trailer = require(j, "trailer", "");
  scene.trailer.interior_length = number_at(trailer, "interior_length", "trailer.");
  scene.trailer.interior_width = number_at(trailer, "interior_width", "trailer.");
  scene.trailer.interior_height = number_at(trailer, "interior_height", "trailer.");
  scene.trailer.wall_albedo = vec3_at(trailer, "wall_albedo", "trailer.");
  scene.trailer.floor_albedo = vec3_at(trailer, "floor_albedo", "trailer.");
  scene.trailer.ceiling_albedo = vec3_at(trailer, "ceiling_albedo", "trailer.");

  const json& cargo = require(j, "cargo", "");
  if (!cargo.is_array()) throw ParseError("cargo", "cargo must be an array");
  for (std::size_t i = 0; i < cargo.size(); i++) {
    const std::string parent = "cargo[" + std::to_string(i) + "].";
    CargoBox box;
    box.min_corner = vec3_at(cargo[i], "min_corner", parent);
    box.size = vec3_at(cargo[i], "size", parent);
    box.albedo = vec3_at(cargo[i], "albedo", parent);
    scene.cargo.push_back(box);
  }

  const json& lights = require(j, "lights", "");
  if (!lights.is_array()) throw ParseError("lights", "lights must be an array");
  for (std::size_t i = 0; i < lights.size(); i++) {
    const std::string parent = "lights[" + std::to_string(i) + "].";
    PointLight light;
    light.position = vec3_at(lights[i], "position", parent);
    light.intensity = vec3_at(lights[i], "intensity", parent);
    scene.lights.push_back(light);
  }

  const json& camera = require(j, "camera", "");
  scene.camera.position = vec3_at(camera, "position", "camera.");
  scene.camera.look_at = vec3_at(camera, "look_at", "camera.");
  scene.camera.up = vec3_at(camera, "up", "camera.");
  scene.camera.vfov = number_at(camera, "vfov", "camera.");
  scene.camera.width = static_cast<int>(number_at(camera, "width", "camera."));
  scene.camera.height = static_cast<int>(number_at(camera, "height", "camera."));

  const json& label = require(j, "label", "");
  if (!label.is_number_integer()) throw ParseError("label", "label must be an integer 0..2");
  const int label_value = label.get<int>();
  if (label_value < 0 || label_value > 2) throw ParseError("label", "label must be 0, 1 or 2");
  scene.label = static_cast<OccupancyLabel>(label_value);
  const json& seed = require(j, "seed", "");
  if (!seed.is_number_unsigned() && !seed.is_number_integer())
    throw ParseError("seed", "seed must be an unsigned integer");
  scene.seed = seed.get<std::uint64_t>();

  const auto violations = validate_scene(scene);
  if (!violations.empty())
    throw ValidationError(violations.front().code,
                          "scene invalid: " + violations.front().code + " - " +
                              violations.front().message);
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << scene_to_json(scene);
  if (!out) throw IoError("write failed: " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return scene_from_json(buffer.str());
}

const char* split_name(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ParseError("split", "unknown split: " + name);
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  j["counts"] = {{"train", manifest.counts[0]}, {"test", manifest.counts[1]}};
  json entries = json::array();
  for (const auto& entry : manifest.entries)
    entries.push_back({{"path", entry.path},
                       {"label", static_cast<int>(entry.label)},
                       {"split", split_name(entry.split)}});
  j["entries"] = std::move(entries);
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid json: ") + e.what());
  }
  DatasetManifest manifest;
  manifest.seed = require(j, "seed", "").get<std::uint64_t>();
  manifest.config_hash = require(j, "config_hash", "").get<std::string>();
  const json& counts = require(j, "counts", "");
  const json& train = require(counts, "train", "counts.");
  const json& test = require(counts, "test", "counts.");
  if (!train.is_array() || train.size() != kNumClasses || !test.is_array() ||
      test.size() != kNumClasses)
    throw ParseError("counts", "counts must hold 3-element train/test arrays");
  for (int c = 0; c < kNumClasses; c++) {
    manifest.counts[0][c] = train[c].get<int>();
    manifest.counts[1][c] = test[c].get<int>();
  }
  const json& entries = require(j, "entries", "");
  if (!entries.is_array()) throw ParseError("entries", "entries must be an array");
  for (std::size_t i = 0; i < entries.size(); i++) {
    const std::string parent = "entries[" + std::to_string(i) + "].";
    ManifestEntry entry;
    entry.path = require(entries[i], "path", parent).get<std::string>();
    entry.label = label_from_int(require(entries[i], "label", parent).get<int>());
    entry.split = split_from_name(require(entries[i], "split", parent).get<std::string>());
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return manifest_from_json(buffer.str());
}

}  // namespace cargopatch
