#include "cargopatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cargopatch/error.hpp"
#include "cargopatch/log.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/render.hpp"
#include "cargopatch/rng.hpp"
#include "cargopatch/strings.hpp"

namespace cargopatch {
namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1ULL;

int argmax3(const std::array<double, 3>& probs) {
  int best = 0;
  for (int i = 1; i < 3; i++)
    if (probs[i] > probs[best]) best = i;
  return best;
}

void check_eval_config(const EvalConfig& cfg) {
  if (cfg.placements_per_scene < 1) throw ConfigError("placements_per_scene must be >= 1");
  if (cfg.spp < 1) throw ConfigError("eval spp must be >= 1");
}

void check_eval_scenes(const EvalConfig& cfg, const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw ContractError("evaluation requires at least one scene");
  if (!scenario_is_targeted(cfg.scenario)) return;
  const OccupancyLabel source = scenario_source(cfg.scenario);
  for (std::size_t i = 0; i < scenes.size(); i++) {
    if (scenes[i].label != source) {
      throw ContractError("scene " + std::to_string(i) + " has label " +
                          std::string(label_name(scenes[i].label)) + " but a " +
                          scenario_name(cfg.scenario) + " evaluation uses " + label_name(source) +
                          " scenes");
    }
  }
}

struct Trial {
  int scene_idx = 0;
  int anchor_id = -1;  // -1: the scene had no valid placement
};

// Anchor pools plus the deterministic trial list drawn from them. Shared by
// evaluate_asr and dump_examples so that both see the same placements.
struct TrialPlan {
  std::vector<std::vector<PlacementAnchor>> anchors;
  std::vector<Trial> trials;
  int no_placement_scenes = 0;
};

TrialPlan plan_trials(const EvalConfig& cfg, const std::vector<Scene>& scenes) {
  TrialPlan plan;
  plan.anchors.resize(scenes.size());
  parallel_for(scenes.size(), cfg.workers,
               [&](std::size_t i) { plan.anchors[i] = valid_anchors(scenes[i], cfg.placement, 1); });

  Rng rng(hash2(cfg.seed, kEvalStream));
  plan.trials.reserve(scenes.size() * static_cast<std::size_t>(cfg.placements_per_scene));
  for (std::size_t i = 0; i < scenes.size(); i++) {
    const int pool = static_cast<int>(plan.anchors[i].size());
    if (pool == 0) {
      plan.no_placement_scenes++;
      log_warn("eval", "scene " + std::to_string(i) +
                           " has no valid placement; counting its trials as failures");
    }
    for (int k = 0; k < cfg.placements_per_scene; k++) {
      Trial trial;
      trial.scene_idx = static_cast<int>(i);
      trial.anchor_id = pool == 0 ? -1 : static_cast<int>(rng.below(static_cast<std::uint64_t>(pool)));
      plan.trials.push_back(trial);
    }
  }
  return plan;
}

ImageRGB render_trial(const EvalConfig& cfg, const std::vector<Scene>& scenes,
                      const TrialPlan& plan, const Trial& trial, const PatchTexture& patch) {
  const Scene& scene = scenes[static_cast<std::size_t>(trial.scene_idx)];
  const PatchQuad quad = make_render_quad(
      plan.anchors[static_cast<std::size_t>(trial.scene_idx)][static_cast<std::size_t>(trial.anchor_id)]);
  RenderRequest request;
  request.scene = &scene;
  request.patch = &patch;
  request.quads = {&quad, 1};
  request.spp = cfg.spp;
  request.workers = 1;
  return render(request);
}

bool trial_success(const EvalConfig& cfg, OccupancyLabel truth, int predicted) {
  if (scenario_is_targeted(cfg.scenario))
    return predicted == static_cast<int>(scenario_target(cfg.scenario));
  return predicted != static_cast<int>(truth);
}

int env_row(const std::string& environment) {
  if (environment == "scene3d") return 0;
  if (environment == "image2d") return 1;
  throw ContractError("report environment \"" + environment + "\" is not scene3d or image2d");
}

int scenario_col(const std::string& scenario) {
  if (scenario == "dos") return 0;
  if (scenario == "concealment") return 1;
  throw ContractError("the comparison table covers dos and concealment, not \"" + scenario + "\"");
}

}  // namespace

EvalReport evaluate_asr(const EvalConfig& cfg, const std::vector<Scene>& scenes,
                        const VictimModel& model, const PatchTexture& patch) {
  check_eval_config(cfg);
  check_eval_scenes(cfg, scenes);
  if (patch.height < 1 || patch.width < 1)
    throw ContractError("evaluation requires a non-empty patch");

  const TrialPlan plan = plan_trials(cfg, scenes);

  std::vector<int> predicted(plan.trials.size(), -1);
  parallel_for(plan.trials.size(), cfg.workers, [&](std::size_t t) {
    const Trial& trial = plan.trials[t];
    const OccupancyLabel truth = scenes[static_cast<std::size_t>(trial.scene_idx)].label;
    if (trial.anchor_id < 0) {
      predicted[t] = static_cast<int>(truth);  // forced failure
      return;
    }
    const ImageRGB image = render_trial(cfg, scenes, plan, trial, patch);
    predicted[t] = argmax3(forward(model, image));
  });

  EvalReport report;
  report.scenario = scenario_name(cfg.scenario);
  report.environment = env_name(cfg.environment);
  report.n_scenes = static_cast<int>(scenes.size());
  report.placements_per_scene = cfg.placements_per_scene;
  report.trials = static_cast<int>(plan.trials.size());
  report.no_placement_scenes = plan.no_placement_scenes;
  report.seed = cfg.seed;

  int successes = 0, correct = 0;
  for (std::size_t t = 0; t < plan.trials.size(); t++) {
    const OccupancyLabel truth = scenes[static_cast<std::size_t>(plan.trials[t].scene_idx)].label;
    const int pred = predicted[t];
    report.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)]++;
    if (trial_success(cfg, truth, pred)) successes++;
    if (pred == static_cast<int>(truth)) correct++;
  }
  report.asr_percent = 100.0 * successes / report.trials;
  report.accuracy = static_cast<double>(correct) / report.trials;
  return report;
}

CleanReport evaluate_clean(const std::vector<Scene>& scenes, const VictimModel& model, int spp,
                           int workers) {
  if (scenes.empty()) throw ContractError("evaluation requires at least one scene");
  if (spp < 1) throw ConfigError("eval spp must be >= 1");

  std::vector<int> predicted(scenes.size(), -1);
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    RenderRequest request;
    request.scene = &scenes[i];
    request.spp = spp;
    request.workers = 1;
    predicted[i] = argmax3(forward(model, render(request)));
  });

  CleanReport report;
  report.n_scenes = static_cast<int>(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); i++)
    report.confusion[static_cast<std::size_t>(scenes[i].label)][static_cast<std::size_t>(predicted[i])]++;

  int trace = 0;
  for (int c = 0; c < 3; c++) {
    const auto cs = static_cast<std::size_t>(c);
    int row = 0, col = 0;
    for (int j = 0; j < 3; j++) {
      row += report.confusion[cs][static_cast<std::size_t>(j)];
      col += report.confusion[static_cast<std::size_t>(j)][cs];
    }
    const int diag = report.confusion[cs][cs];
    trace += diag;
    ClassMetrics& cm = report.per_class[cs];
    cm.precision = col > 0 ? static_cast<double>(diag) / col : 0.0;
    cm.recall = row > 0 ? static_cast<double>(diag) / row : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    report.macro_f1 += cm.f1 / 3.0;
  }
  report.accuracy = static_cast<double>(trace) / report.n_scenes;
  return report;
}

ComparisonTable compare_table(const std::vector<EvalReport>& reports) {
  bool seen[2][2] = {{false, false}, {false, false}};
  ComparisonTable table;
  for (const EvalReport& report : reports) {
    const int row = env_row(report.environment);
    const int col = scenario_col(report.scenario);
    if (seen[row][col]) {
      throw ContractError(std::string("duplicate comparison cell ") + report.environment + "/" +
                          report.scenario);
    }
    seen[row][col] = true;
    table.asr[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = report.asr_percent;
  }
  for (int row = 0; row < 2; row++) {
    for (int col = 0; col < 2; col++) {
      if (!seen[row][col]) {
        throw ContractError(std::string("missing comparison cell ") +
                            (row == 0 ? "scene3d" : "image2d") + "/" +
                            (col == 0 ? "dos" : "concealment"));
      }
    }
  }
  table.scene3d_beats_2d_dos = table.asr[0][0] > table.asr[1][0];
  table.scene3d_beats_2d_concealment = table.asr[0][1] > table.asr[1][1];
  table.dos_beats_concealment_3d = table.asr[0][0] > table.asr[0][1];
  return table;
}

std::string table_to_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "environment,scenario,asr_percent\n";
  const char* envs[2] = {"scene3d", "image2d"};
  const char* scenarios[2] = {"dos", "concealment"};
  for (int row = 0; row < 2; row++) {
    for (int col = 0; col < 2; col++) {
      out << envs[row] << ',' << scenarios[col] << ','
          << format_double(table.asr[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)])
          << '\n';
    }
  }
  return out.str();
}

std::string table_to_text(const ComparisonTable& table) {
  char line[128];
  std::ostringstream out;
  out << "ASR (%)             dos  concealment\n";
  std::snprintf(line, sizeof(line), "scene3d        %8.2f     %8.2f\n", table.asr[0][0],
                table.asr[0][1]);
  out << line;
  std::snprintf(line, sizeof(line), "image2d        %8.2f     %8.2f\n", table.asr[1][0],
                table.asr[1][1]);
  out << line;
  out << "scene3d beats image2d (dos):         " << (table.scene3d_beats_2d_dos ? "yes" : "no")
      << '\n';
  out << "scene3d beats image2d (concealment): "
      << (table.scene3d_beats_2d_concealment ? "yes" : "no") << '\n';
  out << "dos beats concealment (scene3d):     " << (table.dos_beats_concealment_3d ? "yes" : "no")
      << '\n';
  return out.str();
}

int dump_examples(const EvalConfig& cfg, const std::vector<Scene>& scenes,
                  const VictimModel& model, const PatchTexture& patch,
                  const std::filesystem::path& out_dir, int max_images, bool successes_only) {
  check_eval_config(cfg);
  check_eval_scenes(cfg, scenes);
  if (max_images < 0) throw ConfigError("max_images must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const TrialPlan plan = plan_trials(cfg, scenes);

  struct Rendered {
    ImageRGB image;
    int predicted = -1;
  };
  std::vector<Rendered> slots(plan.trials.size());
  parallel_for(plan.trials.size(), cfg.workers, [&](std::size_t t) {
    if (plan.trials[t].anchor_id < 0) return;
    slots[t].image = render_trial(cfg, scenes, plan, plan.trials[t], patch);
    slots[t].predicted = argmax3(forward(model, slots[t].image));
  });

  int written = 0;
  for (std::size_t t = 0; t < plan.trials.size() && written < max_images; t++) {
    if (slots[t].predicted < 0) continue;
    const Trial& trial = plan.trials[t];
    const OccupancyLabel truth = scenes[static_cast<std::size_t>(trial.scene_idx)].label;
    const bool success = trial_success(cfg, truth, slots[t].predicted);
    if (successes_only && !success) continue;
    char name[128];
    std::snprintf(name, sizeof(name), "scene%04d_trial%d_true-%s_pred-%s_%s.ppm",
                  trial.scene_idx, static_cast<int>(t) % cfg.placements_per_scene,
                  label_name(truth), label_name(static_cast<OccupancyLabel>(slots[t].predicted)),
                  success ? "success" : "failure");
    save_ppm(slots[t].image, out_dir / name);
    written++;
  }
  return written;
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["scenario"] = report.scenario;
  j["environment"] = report.environment;
  j["asr_percent"] = report.asr_percent;
  j["accuracy"] = report.accuracy;
  j["confusion"] = report.confusion;
  j["n_scenes"] = report.n_scenes;
  j["placements_per_scene"] = report.placements_per_scene;
  j["trials"] = report.trials;
  j["no_placement_scenes"] = report.no_placement_scenes;
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("", "evaluation report must be a JSON object");
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw ParseError("schema_version", "unsupported report schema version");
    EvalReport report;
    report.scenario = j.at("scenario").get<std::string>();
    report.environment = j.at("environment").get<std::string>();
    report.asr_percent = j.at("asr_percent").get<double>();
    report.accuracy = j.at("accuracy").get<double>();
    const auto& conf = j.at("confusion");
    if (!conf.is_array() || conf.size() != 3)
      throw ParseError("confusion", "confusion must be a 3x3 array");
    for (std::size_t r = 0; r < 3; r++) {
      if (!conf[r].is_array() || conf[r].size() != 3)
        throw ParseError("confusion", "confusion must be a 3x3 array");
      for (std::size_t c = 0; c < 3; c++) report.confusion[r][c] = conf[r][c].get<int>();
    }
    report.n_scenes = j.at("n_scenes").get<int>();
    report.placements_per_scene = j.at("placements_per_scene").get<int>();
    report.trials = j.at("trials").get<int>();
    report.no_placement_scenes = j.at("no_placement_scenes").get<int>();
    report.seed = j.at("seed").get<std::uint64_t>();
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("", std::string("malformed evaluation report: ") + e.what());
  }
}

void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << eval_report_to_json(report);
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return eval_report_from_json(buf.str());
}

}  // namespace cargopatch
