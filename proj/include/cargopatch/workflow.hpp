#pragma once

// End-to-end run orchestration. A run directory holds the dataset, the
// trained classifier, one optimized patch per (environment, scenario) cell
// and the evaluation reports, all derived from one config and master seed.
// Every artifact gets a .meta.json sidecar carrying the stage seed and the
// run config hash, so stages refuse to consume artifacts from a different
// configuration.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cargopatch/attack.hpp"
#include "cargopatch/eval.hpp"
#include "cargopatch/net.hpp"
#include "cargopatch/scene_gen.hpp"
#include "cargopatch/scene_io.hpp"

namespace cargopatch {

struct RunConfig {
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 0;
  int workers = 0;
  std::string dataset = "desk";  // "desk" or "table1"
  TrainConfig train;             // seed and workers are derived per stage
  AttackConfig attack;           // scenario/environment/seed/workers derived per cell
  EvalConfig eval;               // likewise
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Stable digest of everything but out_dir; stamped into artifact sidecars.
std::string run_config_hash(const RunConfig& cfg);

struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path config;
  std::filesystem::path dataset_dir;
  std::filesystem::path manifest;
  std::filesystem::path weights;
  std::filesystem::path train_metrics;
  std::filesystem::path patches_dir;
  std::filesystem::path reports_dir;
  std::filesystem::path table_csv;
  std::filesystem::path table_txt;

  std::filesystem::path patch_bin(AttackEnv env, AttackScenario scenario) const;
  std::filesystem::path patch_ppm(AttackEnv env, AttackScenario scenario) const;
  std::filesystem::path loss_csv(AttackEnv env, AttackScenario scenario) const;
  std::filesystem::path eval_report(AttackEnv env, AttackScenario scenario) const;
};

RunPaths run_paths(const RunConfig& cfg);

// Sidecar helpers. check_meta throws ConfigError when the sidecar is missing
// or was written under a different config hash.
void write_meta(const std::filesystem::path& artifact, std::uint64_t stage_seed,
                const std::string& config_hash);
void check_meta(const std::filesystem::path& artifact, const std::string& config_hash);

// Scenes of one split (optionally one class), loaded in manifest order.
std::vector<Scene> load_split_scenes(const DatasetManifest& manifest,
                                     const std::filesystem::path& dataset_root, Split split,
                                     std::optional<OccupancyLabel> label, int workers = 0);

DatasetManifest wf_gen_data(const RunConfig& cfg);
TrainResult wf_train(const RunConfig& cfg);
AttackResult wf_attack(const RunConfig& cfg, AttackEnv env, AttackScenario scenario);
EvalReport wf_eval(const RunConfig& cfg, AttackEnv env, AttackScenario scenario);
ComparisonTable wf_table(const RunConfig& cfg);

// Cheap post-attack probe: single placement per scene on up to `max_scenes`
// held-out scenes.
double wf_quick_asr(const RunConfig& cfg, AttackEnv env, AttackScenario scenario,
                    const PatchTexture& patch, int max_scenes = 16);

}  // namespace cargopatch
