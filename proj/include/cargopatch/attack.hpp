#pragma once

// Patch optimization: expectation-over-transformation gradient descent in the
// 3D renderer (scene, placement, lighting and sampling jitter all resampled
// per step), plus the cheaper 2D baseline that composites the patch onto a
// cached clean render through the placement homography.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cargopatch/net.hpp"
#include "cargopatch/patch.hpp"
#include "cargopatch/placement.hpp"
#include "cargopatch/render.hpp"
#include "cargopatch/scene.hpp"

namespace cargopatch {

enum class AttackScenario { dos, concealment, untargeted };
enum class AttackEnv { scene3d, image2d };

const char* scenario_name(AttackScenario scenario);
AttackScenario scenario_from_name(const std::string& name);
const char* env_name(AttackEnv environment);
AttackEnv env_from_name(const std::string& name);

// Source class whose scenes the attack starts from. Untargeted attacks accept
// mixed-class scene sets and have no single source.
bool scenario_is_targeted(AttackScenario scenario);
OccupancyLabel scenario_source(AttackScenario scenario);
OccupancyLabel scenario_target(AttackScenario scenario);

inline constexpr double kLossEps = 1e-12;

double loss_targeted(const std::array<double, 3>& probs, OccupancyLabel target);
double loss_untargeted(const std::array<double, 3>& probs, OccupancyLabel true_label);

struct EotConfig {
  bool resample_placement = true;
  double brightness_jitter = 0.1;  // +- fraction on light intensities, 3D only
};

struct AttackConfig {
  AttackScenario scenario = AttackScenario::dos;
  AttackEnv environment = AttackEnv::scene3d;
  int iterations = 2000;
  double learning_rate = 0.02;
  int batch_size = 4;
  int patches_per_scene = 1;
  int patch_texels = 32;  // square texture, patch_texels x patch_texels
  EotConfig eot;
  std::uint64_t seed = 0;
  int spp = 4;
  int workers = 0;
  int placement_retries = 8;  // scene redraws when one has no valid anchor
  PlacementConfig placement;
  bool random_init = false;  // default mid-gray 0.5
};

struct LossRecord {
  int iter = 0;
  double loss = 0.0;
  double target_prob = 0.0;  // target class (targeted) or true class (untargeted)
};

struct AttackResult {
  PatchTexture patch;
  std::vector<LossRecord> history;
  int skipped_draws = 0;       // scene draws without a valid placement
  int background_renders = 0;  // 2D only: distinct clean backgrounds rendered
};

AttackResult optimize_patch_3d(const AttackConfig& cfg, const std::vector<Scene>& scenes,
                               const VictimModel& model);

// Replaces the pixels inside the mapped quad with bilinear patch samples; no
// shading or shadows. The tape records the bilinear weights.
std::pair<ImageRGB, RenderTape> composite_2d(const ImageRGB& background,
                                             const PatchTexture& patch, const Homography& h);

AttackResult optimize_patch_2d(const AttackConfig& cfg, const std::vector<Scene>& scenes,
                               const VictimModel& model);

void save_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

std::string attack_config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const std::string& text);

}  // namespace cargopatch
