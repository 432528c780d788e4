#include "cargopatch/scene_gen.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cargopatch/error.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/rng.hpp"

namespace cargopatch {

namespace {

void add_cargo_rows(Scene& scene, const GenParams& p, double target_coverage, Rng& rng) {
  const double trailer_w = scene.trailer.interior_width;
  const double trailer_l = scene.trailer.interior_length;
  const double floor_area = trailer_w * trailer_l;
  double covered = 0.0;
  double z_cursor = trailer_l;  // rows grow from the nose toward the door

  while (covered / floor_area < target_coverage - 1e-9) {
    const double z_avail = z_cursor - p.door_clearance;
    if (z_avail < p.min_row_depth) break;

    // Lay out box widths across the trailer, last box takes the remainder.
    const double margin = rng.uniform(0.02, 0.06);
    const int k = rng.uniform_int(2, 3);
    std::vector<double> gaps(k - 1);
    double gap_total = 0.0;
    for (double& g : gaps) {
      g = rng.uniform(p.lateral_gap_lo, p.lateral_gap_hi);
      gap_total += g;
    }
    const double avail_w = trailer_w - 2.0 * margin - gap_total;
    const double base_w = avail_w / k;
    std::vector<double> widths(k);
    double used = 0.0;
    for (int i = 0; i + 1 < k; i++) {
      widths[i] = base_w + rng.uniform(-p.box_width_jitter, p.box_width_jitter);
      used += widths[i];
    }
    widths[k - 1] = avail_w - used;
    double row_width_sum = 0.0;
    for (double w : widths) row_width_sum += w;

    double depth = rng.uniform(p.row_depth_lo, p.row_depth_hi);
    const double remaining = target_coverage * floor_area - covered;
    if (row_width_sum * depth > remaining)
      depth = std::max(p.min_row_depth, remaining / row_width_sum);
    depth = std::min(depth, z_avail);

    double x_cursor = margin;
    for (int i = 0; i < k; i++) {
      CargoBox box;
      box.size = {widths[i], rng.uniform(p.box_height_lo, p.box_height_hi), depth};
      box.min_corner = {x_cursor, 0.0, z_cursor - depth};
      scene.cargo.push_back(box);
      x_cursor += widths[i] + (i + 1 < k ? gaps[i] : 0.0);
    }
    covered += row_width_sum * depth;
    z_cursor -= depth + rng.uniform(p.row_gap_lo, p.row_gap_hi);
  }
}

void add_lights(Scene& scene, const GenParams& p, Rng& rng) {
  const auto& tr = scene.trailer;
  const int count = rng.uniform_int(p.lights_min, p.lights_max);
  for (int i = 0; i < count; i++) {
    PointLight light;
    light.position = {rng.uniform(0.3, tr.interior_width - 0.3),
                      rng.uniform(tr.interior_height - 0.30, tr.interior_height - 0.05),
                      rng.uniform(0.5, tr.interior_length - 0.5)};
    const double power = rng.log_uniform(p.intensity_decade_lo, 10.0 * p.intensity_decade_lo);
    light.intensity = {power, power * rng.uniform(0.92, 1.0), power * rng.uniform(0.85, 1.0)};
    scene.lights.push_back(light);
  }
}

void add_camera(Scene& scene, const GenParams& p, Rng& rng) {
  const auto& tr = scene.trailer;
  Camera cam;
  const Vec3 base_pos{tr.interior_width * 0.5, tr.interior_height - 0.20, 0.20};
  const Vec3 base_target{tr.interior_width * 0.5, 0.6, tr.interior_length * 0.5};
  const double j = p.camera_pos_jitter;
  cam.position = base_pos + Vec3{rng.uniform(-j, j), rng.uniform(-j, j), rng.uniform(-j, j)};

  const double reach = length(base_target - cam.position);
  Vec3 dir = normalize(base_target - cam.position);
  const Vec3 right = normalize(cross(dir, Vec3{0.0, 1.0, 0.0}));
  const double a = deg_to_rad(p.camera_angle_jitter_deg);
  dir = rotate_axis_angle(dir, right, rng.uniform(-a, a));
  dir = rotate_axis_angle(dir, Vec3{0.0, 1.0, 0.0}, rng.uniform(-a, a));
  cam.look_at = cam.position + dir * reach;
  cam.up = {0.0, 1.0, 0.0};
  cam.vfov = 60.0;
  cam.width = p.image_width;
  cam.height = p.image_height;
  scene.camera = cam;
}

double pick_target_coverage(OccupancyLabel label, Rng& rng) {
  switch (label) {
    case OccupancyLabel::Empty: return 0.0;
    case OccupancyLabel::Medium: return rng.uniform(0.28, 0.57);
    case OccupancyLabel::Full: return rng.uniform(0.78, 0.88);
  }
  return 0.0;
}

}  // namespace

Scene generate_scene(OccupancyLabel label, const GenParams& params, std::uint64_t seed) {
  for (int attempt = 0; attempt < params.max_attempts; attempt++) {
    Rng rng(hash3(seed, static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(attempt)));
    Scene scene;
    scene.label = label;
    scene.seed = seed;
    if (label != OccupancyLabel::Empty)
      add_cargo_rows(scene, params, pick_target_coverage(label, rng), rng);
    add_lights(scene, params, rng);
    add_camera(scene, params, rng);

    const CoverageBand band = coverage_band(label);
    const double coverage = floor_coverage(scene);
    const bool coverage_ok =
        label == OccupancyLabel::Empty ? scene.cargo.empty() : band.contains(coverage);
    if (coverage_ok && validate_scene(scene).empty()) return scene;
  }
  throw GenerationError("generate_scene gave up for label " +
                        std::string(label_name(label)) + " seed " + std::to_string(seed) +
                        " after " + std::to_string(params.max_attempts) + " attempts");
}

DatasetConfig table1_config(std::uint64_t master_seed) {
  DatasetConfig config;
  config.counts = {{{1383, 2215, 1129}, {346, 554, 283}}};
  config.master_seed = master_seed;
  return config;
}

DatasetConfig desk_config(std::uint64_t master_seed, double scale) {
  DatasetConfig config = table1_config(master_seed);
  for (auto& split_counts : config.counts)
    for (int& n : split_counts) n = static_cast<int>(std::floor(n * scale));
  return config;
}

std::string dataset_config_hash(const DatasetConfig& config) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer),
                "counts=%d,%d,%d/%d,%d,%d seed=%llu box=%.9g,%.9g,%.9g,%.9g,%.9g "
                "gap=%.9g,%.9g,%.9g,%.9g door=%.9g lights=%d,%d,%.9g cam=%.9g,%.9g img=%dx%d",
                config.counts[0][0], config.counts[0][1], config.counts[0][2],
                config.counts[1][0], config.counts[1][1], config.counts[1][2],
                static_cast<unsigned long long>(config.master_seed),
                config.gen.box_width_jitter, config.gen.box_height_lo, config.gen.box_height_hi,
                config.gen.row_depth_lo, config.gen.row_depth_hi, config.gen.row_gap_lo,
                config.gen.row_gap_hi, config.gen.lateral_gap_lo, config.gen.lateral_gap_hi,
                config.gen.door_clearance, config.gen.lights_min, config.gen.lights_max,
                config.gen.intensity_decade_lo, config.gen.camera_pos_jitter,
                config.gen.camera_angle_jitter_deg, config.gen.image_width,
                config.gen.image_height);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char* c = buffer; *c; c++) {
    h ^= static_cast<unsigned char>(*c);
    h *= 0x100000001B3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

DatasetManifest generate_dataset(const DatasetConfig& config,
                                 const std::filesystem::path& out_dir, int workers) {
  for (const auto& split_counts : config.counts)
    for (int n : split_counts)
      if (n < 0) throw ContractError("dataset counts must be >= 0");

  DatasetManifest manifest;
  manifest.seed = config.master_seed;
  manifest.config_hash = dataset_config_hash(config);

  struct Job {
    Split split;
    OccupancyLabel label;
    int idx;
    std::filesystem::path path;
    std::string rel_path;
  };
  std::vector<Job> jobs;
  std::error_code ec;
  for (int s = 0; s < 2; s++) {
    const Split split = static_cast<Split>(s);
    for (int c = 0; c < kNumClasses; c++) {
      const OccupancyLabel label = static_cast<OccupancyLabel>(c);
      const std::filesystem::path dir =
          out_dir / "scenes" / split_name(split) / label_name(label);
      std::filesystem::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
      manifest.counts[s][c] = config.counts[s][c];
      for (int i = 0; i < config.counts[s][c]; i++) {
        const std::string file = "scene_" + std::to_string(i) + ".json";
        jobs.push_back({split, label, i, dir / file,
                        std::string("scenes/") + split_name(split) + "/" + label_name(label) +
                            "/" + file});
      }
    }
  }

  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::uint64_t seed = hash4(config.master_seed, static_cast<std::uint64_t>(job.split),
                                     static_cast<std::uint64_t>(job.label),
                                     static_cast<std::uint64_t>(job.idx));
    try {
      save_scene(generate_scene(job.label, config.gen, seed), job.path);
    } catch (const GenerationError& e) {
      throw GenerationError("scene " + job.rel_path + ": " + e.what());
    }
  });

  for (const Job& job : jobs) manifest.entries.push_back({job.rel_path, job.label, job.split});
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace cargopatch
