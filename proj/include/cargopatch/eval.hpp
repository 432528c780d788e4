#pragma once

// Attack-success-rate evaluation and the four-cell comparison table.
// Scoring is always physical: the patch is placed in the 3D scene and
// rendered; the `environment` field only records which pipeline produced the
// patch being scored.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cargopatch/attack.hpp"
#include "cargopatch/net.hpp"
#include "cargopatch/patch.hpp"
#include "cargopatch/placement.hpp"
#include "cargopatch/scene.hpp"

namespace cargopatch {

struct EvalConfig {
  AttackScenario scenario = AttackScenario::dos;
  AttackEnv environment = AttackEnv::scene3d;  // provenance of the patch under test
  int placements_per_scene = 3;
  int spp = 16;
  std::uint64_t seed = 0;
  int workers = 0;
  PlacementConfig placement;
};

struct EvalReport {
  std::string scenario;
  std::string environment;
  double asr_percent = 0.0;
  double accuracy = 0.0;  // trials predicted as the true label
  std::array<std::array<int, 3>, 3> confusion{};  // [true][predicted], trial counts
  int n_scenes = 0;
  int placements_per_scene = 0;
  int trials = 0;
  int no_placement_scenes = 0;  // scenes whose trials were all counted as failures
  std::uint64_t seed = 0;
};

// One trial per (scene, sampled placement); success means the targeted class
// was predicted (targeted scenarios) or the true class was not (untargeted).
// Scenes without a valid placement contribute failed trials and are logged.
EvalReport evaluate_asr(const EvalConfig& cfg, const std::vector<Scene>& scenes,
                        const VictimModel& model, const PatchTexture& patch);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct CleanReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 3> per_class{};
  std::array<std::array<int, 3>, 3> confusion{};
  int n_scenes = 0;
};

CleanReport evaluate_clean(const std::vector<Scene>& scenes, const VictimModel& model, int spp,
                           int workers = 0);

// The four cells: environment in {scene3d, image2d} x scenario in
// {dos, concealment}.
struct ComparisonTable {
  std::array<std::array<double, 2>, 2> asr{};  // [env][scenario], env 0=scene3d
                                               // 1=image2d, scenario 0=dos 1=concealment
  bool scene3d_beats_2d_dos = false;
  bool scene3d_beats_2d_concealment = false;
  bool dos_beats_concealment_3d = false;
};

// Requires exactly one report per cell.
ComparisonTable compare_table(const std::vector<EvalReport>& reports);

std::string table_to_csv(const ComparisonTable& table);
std::string table_to_text(const ComparisonTable& table);

// Renders the same trials evaluate_asr scores (same seed, same draws) and
// writes PPM images named after their outcome. Returns the number written.
int dump_examples(const EvalConfig& cfg, const std::vector<Scene>& scenes,
                  const VictimModel& model, const PatchTexture& patch,
                  const std::filesystem::path& out_dir, int max_images, bool successes_only);

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);
void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

}  // namespace cargopatch
