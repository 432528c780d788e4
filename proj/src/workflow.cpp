#include "cargopatch/workflow.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "cargopatch/error.hpp"
#include "cargopatch/log.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/patch.hpp"
#include "cargopatch/rng.hpp"

namespace cargopatch {
namespace {

using nlohmann::json;

// Stage tags feeding the per-stage sub-seed hashes.
constexpr std::uint64_t kStageGen = 1;
constexpr std::uint64_t kStageTrain = 2;
constexpr std::uint64_t kStageAttack = 3;
constexpr std::uint64_t kStageEval = 4;
constexpr std::uint64_t kStageProbe = 5;

std::uint64_t cell_key(AttackEnv env, AttackScenario scenario) {
  return static_cast<std::uint64_t>(env) * 3 + static_cast<std::uint64_t>(scenario);
}

std::string cell_name(AttackEnv env, AttackScenario scenario) {
  return std::string(env_name(env)) + "_" + scenario_name(scenario);
}

std::string slurp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spew_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::filesystem::path meta_path(const std::filesystem::path& artifact) {
  return artifact.string() + ".meta.json";
}

void require_artifact(const std::filesystem::path& path, const char* producer) {
  if (!std::filesystem::exists(path)) {
    throw IoError("missing " + path.string() + "; run " + producer + " first");
  }
}

// Recomputed counts must match the stored ones, paths must be unique, and
// each path must sit under its split directory so train/test stay disjoint.
void validate_manifest(const DatasetManifest& manifest) {
  std::array<std::array<int, kNumClasses>, 2> counts{};
  std::set<std::string> seen;
  for (const ManifestEntry& entry : manifest.entries) {
    counts[static_cast<int>(entry.split)][static_cast<int>(entry.label)]++;
    if (!seen.insert(entry.path).second) {
      throw ValidationError("MANIFEST_DUPLICATE_PATH",
                            "manifest lists " + entry.path + " twice");
    }
    const std::string prefix = std::string("scenes/") + split_name(entry.split) + "/";
    if (entry.path.rfind(prefix, 0) != 0) {
      throw ValidationError("MANIFEST_SPLIT_MISMATCH",
                            "manifest entry " + entry.path + " is outside its " +
                                split_name(entry.split) + " split directory");
    }
  }
  if (counts != manifest.counts) {
    throw ValidationError("MANIFEST_COUNTS_MISMATCH",
                          "manifest counts disagree with its entry list");
  }
}

DatasetManifest load_dataset(const RunPaths& paths, const std::string& config_hash) {
  require_artifact(paths.manifest, "gen-data");
  check_meta(paths.manifest, config_hash);
  DatasetManifest manifest = load_manifest(paths.manifest);
  validate_manifest(manifest);
  return manifest;
}

std::vector<Scene> attack_scene_set(const RunConfig& cfg, const DatasetManifest& manifest,
                                    const RunPaths& paths, AttackScenario scenario, Split split) {
  std::optional<OccupancyLabel> label;
  if (scenario_is_targeted(scenario)) label = scenario_source(scenario);
  return load_split_scenes(manifest, paths.dataset_dir, split, label, cfg.workers);
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["out_dir"] = cfg.out_dir.generic_string();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["dataset"] = cfg.dataset;
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"momentum", cfg.train.momentum},
                {"render_spp", cfg.train.render_spp}};
  j["attack"] = json::parse(attack_config_to_json(cfg.attack));
  j["eval"] = {{"placements_per_scene", cfg.eval.placements_per_scene},
               {"spp", cfg.eval.spp},
               {"placement", json::parse(placement_config_to_json(cfg.eval.placement))}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("", "run config must be a JSON object");
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw ParseError("schema_version", "unsupported run config schema version");
    RunConfig cfg;
    cfg.out_dir = j.at("out_dir").get<std::string>();
    if (!j.at("seed").is_number_unsigned())
      throw ParseError("seed", "field \"seed\" must be unsigned");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.workers = j.at("workers").get<int>();
    cfg.dataset = j.at("dataset").get<std::string>();
    if (cfg.dataset != "desk" && cfg.dataset != "table1")
      throw ParseError("dataset", "dataset must be \"desk\" or \"table1\"");
    const json& t = j.at("train");
    cfg.train.epochs = t.at("epochs").get<int>();
    cfg.train.batch_size = t.at("batch_size").get<int>();
    cfg.train.learning_rate = t.at("learning_rate").get<double>();
    cfg.train.momentum = t.at("momentum").get<double>();
    cfg.train.render_spp = t.at("render_spp").get<int>();
    cfg.attack = attack_config_from_json(j.at("attack").dump());
    const json& e = j.at("eval");
    cfg.eval.placements_per_scene = e.at("placements_per_scene").get<int>();
    cfg.eval.spp = e.at("spp").get<int>();
    cfg.eval.placement = placement_config_from_json(e.at("placement").dump());
    return cfg;
  } catch (const json::exception& e) {
    throw ParseError("", std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(slurp_file(path));
}

std::string run_config_hash(const RunConfig& cfg) {
  RunConfig canonical = cfg;
  canonical.out_dir.clear();
  const std::string text = run_config_to_json(canonical);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

RunPaths run_paths(const RunConfig& cfg) {
  RunPaths paths;
  paths.root = cfg.out_dir;
  paths.config = cfg.out_dir / "config.json";
  paths.dataset_dir = cfg.out_dir / "dataset";
  paths.manifest = paths.dataset_dir / "manifest.json";
  paths.weights = cfg.out_dir / "weights.bin";
  paths.train_metrics = cfg.out_dir / "train_metrics.csv";
  paths.patches_dir = cfg.out_dir / "patches";
  paths.reports_dir = cfg.out_dir / "reports";
  paths.table_csv = paths.reports_dir / "table.csv";
  paths.table_txt = paths.reports_dir / "table.txt";
  return paths;
}

std::filesystem::path RunPaths::patch_bin(AttackEnv env, AttackScenario scenario) const {
  return patches_dir / (cell_name(env, scenario) + ".bin");
}

std::filesystem::path RunPaths::patch_ppm(AttackEnv env, AttackScenario scenario) const {
  return patches_dir / (cell_name(env, scenario) + ".ppm");
}

std::filesystem::path RunPaths::loss_csv(AttackEnv env, AttackScenario scenario) const {
  return patches_dir / ("loss_" + cell_name(env, scenario) + ".csv");
}

std::filesystem::path RunPaths::eval_report(AttackEnv env, AttackScenario scenario) const {
  return reports_dir / ("eval_" + cell_name(env, scenario) + ".json");
}

void write_meta(const std::filesystem::path& artifact, std::uint64_t stage_seed,
                const std::string& config_hash) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = stage_seed;
  j["config_hash"] = config_hash;
  spew_file(meta_path(artifact), j.dump(2) + "\n");
}

void check_meta(const std::filesystem::path& artifact, const std::string& config_hash) {
  const std::filesystem::path side = meta_path(artifact);
  if (!std::filesystem::exists(side)) {
    throw ConfigError(artifact.string() + " has no metadata sidecar; regenerate it");
  }
  json j;
  try {
    j = json::parse(slurp_file(side));
  } catch (const json::parse_error& e) {
    throw ParseError("", side.string() + " is not valid JSON: " + e.what());
  }
  const auto it = j.find("config_hash");
  if (it == j.end() || !it->is_string()) {
    throw ParseError("config_hash", side.string() + " lacks a config_hash field");
  }
  if (it->get<std::string>() != config_hash) {
    throw ConfigError(artifact.string() +
                      " was produced under a different configuration; regenerate it");
  }
}

std::vector<Scene> load_split_scenes(const DatasetManifest& manifest,
                                     const std::filesystem::path& dataset_root, Split split,
                                     std::optional<OccupancyLabel> label, int workers) {
  std::vector<const ManifestEntry*> wanted;
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != split) continue;
    if (label && entry.label != *label) continue;
    wanted.push_back(&entry);
  }
  std::vector<Scene> scenes(wanted.size());
  parallel_for(wanted.size(), workers, [&](std::size_t i) {
    scenes[i] = load_scene(dataset_root / wanted[i]->path);
    if (scenes[i].label != wanted[i]->label) {
      throw ValidationError("MANIFEST_LABEL_MISMATCH",
                            wanted[i]->path + " disagrees with its manifest label");
    }
  });
  return scenes;
}

DatasetManifest wf_gen_data(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  ensure_dir(paths.root);
  spew_file(paths.config, run_config_to_json(cfg));

  const std::uint64_t stage_seed = hash2(cfg.seed, kStageGen);
  DatasetConfig dataset_cfg =
      cfg.dataset == "table1" ? table1_config(stage_seed) : desk_config(stage_seed);
  log_info("workflow", "generating " + cfg.dataset + " dataset under " +
                           paths.dataset_dir.string());
  DatasetManifest manifest = generate_dataset(dataset_cfg, paths.dataset_dir, cfg.workers);
  write_meta(paths.manifest, stage_seed, run_config_hash(cfg));
  return manifest;
}

TrainResult wf_train(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  const std::string hash = run_config_hash(cfg);
  const DatasetManifest manifest = load_dataset(paths, hash);

  const std::uint64_t stage_seed = hash2(cfg.seed, kStageTrain);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = stage_seed;
  train_cfg.workers = cfg.workers;

  VictimModel model = VictimModel::init(stage_seed);
  log_info("workflow", "training classifier (" + std::to_string(train_cfg.epochs) + " epochs)");
  const TrainResult result = train(model, manifest, paths.dataset_dir, train_cfg);

  save_weights(model, paths.weights);
  write_meta(paths.weights, stage_seed, hash);
  save_metrics_csv(result.metrics, paths.train_metrics);
  write_meta(paths.train_metrics, stage_seed, hash);
  if (!result.metrics.empty()) {
    log_info("workflow",
             "final test accuracy " + std::to_string(result.metrics.back().test_acc));
  }
  return result;
}

AttackResult wf_attack(const RunConfig& cfg, AttackEnv env, AttackScenario scenario) {
  const RunPaths paths = run_paths(cfg);
  const std::string hash = run_config_hash(cfg);
  const DatasetManifest manifest = load_dataset(paths, hash);
  require_artifact(paths.weights, "train");
  check_meta(paths.weights, hash);
  const VictimModel model = load_weights(paths.weights);

  const std::vector<Scene> scenes = attack_scene_set(cfg, manifest, paths, scenario, Split::train);
  const std::uint64_t stage_seed = hash3(cfg.seed, kStageAttack, cell_key(env, scenario));
  AttackConfig attack_cfg = cfg.attack;
  attack_cfg.scenario = scenario;
  attack_cfg.environment = env;
  attack_cfg.seed = stage_seed;
  attack_cfg.workers = cfg.workers;

  log_info("workflow", "optimizing " + cell_name(env, scenario) + " patch on " +
                           std::to_string(scenes.size()) + " scenes");
  const AttackResult result = env == AttackEnv::scene3d
                                  ? optimize_patch_3d(attack_cfg, scenes, model)
                                  : optimize_patch_2d(attack_cfg, scenes, model);

  ensure_dir(paths.patches_dir);
  save_patch(result.patch, paths.patch_bin(env, scenario));
  write_meta(paths.patch_bin(env, scenario), stage_seed, hash);
  save_patch_preview(result.patch, paths.patch_ppm(env, scenario));
  save_loss_csv(result.history, paths.loss_csv(env, scenario));
  write_meta(paths.loss_csv(env, scenario), stage_seed, hash);
  return result;
}

EvalReport wf_eval(const RunConfig& cfg, AttackEnv env, AttackScenario scenario) {
  const RunPaths paths = run_paths(cfg);
  const std::string hash = run_config_hash(cfg);
  const DatasetManifest manifest = load_dataset(paths, hash);
  require_artifact(paths.weights, "train");
  check_meta(paths.weights, hash);
  const VictimModel model = load_weights(paths.weights);
  require_artifact(paths.patch_bin(env, scenario), "attack");
  check_meta(paths.patch_bin(env, scenario), hash);
  const PatchTexture patch = load_patch(paths.patch_bin(env, scenario));

  const std::vector<Scene> scenes = attack_scene_set(cfg, manifest, paths, scenario, Split::test);
  const std::uint64_t stage_seed = hash3(cfg.seed, kStageEval, cell_key(env, scenario));
  EvalConfig eval_cfg = cfg.eval;
  eval_cfg.scenario = scenario;
  eval_cfg.environment = env;
  eval_cfg.seed = stage_seed;
  eval_cfg.workers = cfg.workers;

  log_info("workflow", "evaluating " + cell_name(env, scenario) + " patch on " +
                           std::to_string(scenes.size()) + " held-out scenes");
  const EvalReport report = evaluate_asr(eval_cfg, scenes, model, patch);

  ensure_dir(paths.reports_dir);
  save_eval_report(report, paths.eval_report(env, scenario));
  write_meta(paths.eval_report(env, scenario), stage_seed, hash);
  return report;
}

ComparisonTable wf_table(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  const std::string hash = run_config_hash(cfg);
  std::vector<EvalReport> reports;
  for (const AttackEnv env : {AttackEnv::scene3d, AttackEnv::image2d}) {
    for (const AttackScenario scenario : {AttackScenario::dos, AttackScenario::concealment}) {
      const std::filesystem::path path = paths.eval_report(env, scenario);
      require_artifact(path, "eval");
      check_meta(path, hash);
      reports.push_back(load_eval_report(path));
    }
  }
  const ComparisonTable table = compare_table(reports);
  ensure_dir(paths.reports_dir);
  spew_file(paths.table_csv, table_to_csv(table));
  write_meta(paths.table_csv, cfg.seed, hash);
  spew_file(paths.table_txt, table_to_text(table));
  return table;
}

double wf_quick_asr(const RunConfig& cfg, AttackEnv env, AttackScenario scenario,
                    const PatchTexture& patch, int max_scenes) {
  const RunPaths paths = run_paths(cfg);
  const std::string hash = run_config_hash(cfg);
  const DatasetManifest manifest = load_dataset(paths, hash);
  require_artifact(paths.weights, "train");
  check_meta(paths.weights, hash);
  const VictimModel model = load_weights(paths.weights);

  std::vector<Scene> scenes = attack_scene_set(cfg, manifest, paths, scenario, Split::test);
  if (static_cast<int>(scenes.size()) > max_scenes) scenes.resize(max_scenes);
  EvalConfig eval_cfg = cfg.eval;
  eval_cfg.scenario = scenario;
  eval_cfg.environment = env;
  eval_cfg.placements_per_scene = 1;
  eval_cfg.seed = hash3(cfg.seed, kStageProbe, cell_key(env, scenario));
  eval_cfg.workers = cfg.workers;
  return evaluate_asr(eval_cfg, scenes, model, patch).asr_percent;
}

}  // namespace cargopatch
