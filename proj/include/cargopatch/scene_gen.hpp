#pragma once

// Procedural generation of labeled trailer scenes and dataset layout on disk.
// Cargo is packed nose-to-door in rows of axis-aligned boxes with jittered
// gaps; the final row depth is solved so the floor-coverage fraction lands on
// a target drawn inside the label's band. Rejection sampling retries with a
// fresh sub-seed when the result still misses the band.

#include <array>
#include <cstdint>
#include <filesystem>

#include "cargopatch/scene.hpp"
#include "cargopatch/scene_io.hpp"

namespace cargopatch {

struct GenParams {
  // Cargo box extents, meters.
  double box_width_jitter = 0.10;   // +- around an even split of the row
  double box_height_lo = 0.70;
  double box_height_hi = 2.20;
  double row_depth_lo = 0.70;
  double row_depth_hi = 1.20;
  double row_gap_lo = 0.02;
  double row_gap_hi = 0.30;
  double lateral_gap_lo = 0.02;
  double lateral_gap_hi = 0.08;
  double door_clearance = 0.40;  // floor strip kept free at the door end
  double min_row_depth = 0.05;

  // Lights.
  int lights_min = 1;
  int lights_max = 3;
  double intensity_decade_lo = 8.0;  // log-uniform over [lo, 10*lo]

  // Camera.
  double camera_pos_jitter = 0.15;      // meters, per axis
  double camera_angle_jitter_deg = 5.0; // yaw and pitch

  int image_width = 96;
  int image_height = 96;

  int max_attempts = 200;
};

Scene generate_scene(OccupancyLabel label, const GenParams& params, std::uint64_t seed);

struct DatasetConfig {
  // counts[split][label]
  std::array<std::array<int, kNumClasses>, 2> counts = {{{0, 0, 0}, {0, 0, 0}}};
  GenParams gen;
  std::uint64_t master_seed = 0;
};

// Full-size distribution: Empty 1383/346, Medium 2215/554, Full 1129/283.
DatasetConfig table1_config(std::uint64_t master_seed);

// Same distribution scaled down (counts floored) for desk-scale runs.
DatasetConfig desk_config(std::uint64_t master_seed, double scale = 0.05);

// Writes <out_dir>/scenes/<split>/<label>/scene_<idx>.json for every entry
// plus <out_dir>/manifest.json, and returns the manifest.
DatasetManifest generate_dataset(const DatasetConfig& config,
                                 const std::filesystem::path& out_dir, int workers = 0);

// Stable hex digest of the generation config, recorded in the manifest.
std::string dataset_config_hash(const DatasetConfig& config);

}  // namespace cargopatch
