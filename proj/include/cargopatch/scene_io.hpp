#pragma once

// Canonical JSON serialization for scenes and dataset manifests.
// File schema (schema_version 1): fields mirror the Scene type one-to-one;
// floats are written as shortest round-trip decimals, so save/load is the
// identity on every field.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cargopatch/scene.hpp"

namespace cargopatch {

std::string scene_to_json(const Scene& scene);

// Parses and validates. Schema problems raise ParseError with the offending
// field path; invariant violations raise ValidationError with the code.
Scene scene_from_json(const std::string& text);

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

enum class Split : int { train = 0, test = 1 };
const char* split_name(Split split);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  OccupancyLabel label = OccupancyLabel::Empty;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  // counts[split][label]
  std::array<std::array<int, kNumClasses>, 2> counts{};
  std::uint64_t seed = 0;
  std::string config_hash;

  int count(Split split, OccupancyLabel label) const {
    return counts[static_cast<int>(split)][static_cast<int>(label)];
  }
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace cargopatch
