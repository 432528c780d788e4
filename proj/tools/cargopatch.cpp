// cargopatch: one binary for the full pipeline.
//   gen-data -> train -> attack -> eval -> table, plus a render utility.
// Config comes from --config JSON; individual flags override it. Exit codes:
// 0 success, 2 missing/invalid input, 64 usage error, 1 internal error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cargopatch/error.hpp"
#include "cargopatch/log.hpp"
#include "cargopatch/workflow.hpp"

using namespace cargopatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitUsage = 64;

std::uint64_t parse_env_seed(const char* text) {
  std::string s(text);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("CARGOPATCH_SEED must be a nonnegative integer, got \"" + s + "\"");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError("CARGOPATCH_SEED is out of range: \"" + s + "\"");
  }
}

void print_dataset_summary(const DatasetManifest& manifest) {
  std::cout << "dataset: " << manifest.entries.size() << " scenes (config "
            << manifest.config_hash << ")\n";
  for (const Split split : {Split::train, Split::test}) {
    std::cout << "  " << split_name(split) << ":";
    for (int c = 0; c < kNumClasses; c++) {
      const auto label = static_cast<OccupancyLabel>(c);
      std::cout << ' ' << label_name(label) << '=' << manifest.count(split, label);
    }
    std::cout << '\n';
  }
}

std::filesystem::path patched_preview_path(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  const std::string stem = p.stem().string();
  const std::string ext = p.extension().string();
  p.replace_filename(stem + "_patched" + (ext.empty() ? ".ppm" : ext));
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physical adversarial patches against a cargo-occupancy classifier"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset, scenario_s, env_s;
  std::string scene_path, output_path, patch_path, anchors_path;
  std::uint64_t seed = 0;
  int workers = 0, iterations = 0, epochs = 0, spp = 0;
  bool quiet = false, verbose = false;

  auto* opt_config = app.add_option("--config", config_path, "run config JSON file");
  auto* opt_seed = app.add_option("--seed", seed, "master seed (env CARGOPATCH_SEED as fallback)");
  auto* opt_out = app.add_option("--out", out_dir, "run output directory");
  auto* opt_workers =
      app.add_option("--workers", workers, "worker threads (0 = available parallelism)");
  app.add_flag("--quiet", quiet, "warnings and errors only");
  app.add_flag("--verbose", verbose, "debug logging");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate the procedural scene dataset");
  auto* opt_dataset = cmd_gen->add_option("--dataset", dataset, "preset: desk or table1")
                          ->check(CLI::IsMember({"desk", "table1"}));

  auto* cmd_train = app.add_subcommand("train", "train the occupancy classifier");
  auto* opt_epochs = cmd_train->add_option("--epochs", epochs, "training epochs");

  auto* cmd_attack = app.add_subcommand("attack", "optimize an adversarial patch");
  auto* opt_at_scenario =
      cmd_attack->add_option("--scenario", scenario_s, "dos, concealment or untargeted")
          ->check(CLI::IsMember({"dos", "concealment", "untargeted"}));
  auto* opt_at_env = cmd_attack->add_option("--env", env_s, "scene3d or image2d")
                         ->check(CLI::IsMember({"scene3d", "image2d"}));
  auto* opt_iterations = cmd_attack->add_option("--iterations", iterations, "optimizer steps");

  auto* cmd_eval = app.add_subcommand("eval", "score a patch on held-out scenes");
  auto* opt_ev_scenario =
      cmd_eval->add_option("--scenario", scenario_s, "dos, concealment or untargeted")
          ->check(CLI::IsMember({"dos", "concealment", "untargeted"}));
  auto* opt_ev_env = cmd_eval->add_option("--env", env_s, "scene3d or image2d")
                         ->check(CLI::IsMember({"scene3d", "image2d"}));

  auto* cmd_table = app.add_subcommand("table", "emit the four-cell comparison table");

  auto* cmd_render = app.add_subcommand("render", "render a scene file to PPM");
  cmd_render->add_option("--scene", scene_path, "scene JSON file")->required();
  cmd_render->add_option("--output", output_path, "output PPM path")->required();
  auto* opt_spp = cmd_render->add_option("--spp", spp, "samples per pixel");
  auto* opt_patch =
      cmd_render->add_option("--patch", patch_path, "patch file; also writes a patched preview");
  auto* opt_anchors =
      cmd_render->add_option("--dump-anchors", anchors_path, "write valid placement anchors JSON");

  // Let --config/--seed/--out/--workers appear after the subcommand too.
  for (CLI::App* sub : {cmd_gen, cmd_train, cmd_attack, cmd_eval, cmd_table, cmd_render})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  set_log_level(verbose ? LogLevel::debug : quiet ? LogLevel::warn : LogLevel::info);

  try {
    RunConfig cfg;
    if (opt_config->count() > 0) cfg = load_run_config(config_path);
    if (opt_seed->count() > 0) {
      cfg.seed = seed;
    } else if (const char* env = std::getenv("CARGOPATCH_SEED")) {
      cfg.seed = parse_env_seed(env);
    }
    if (opt_out->count() > 0) cfg.out_dir = out_dir;
    if (opt_workers->count() > 0) cfg.workers = workers;

    if (cmd_gen->parsed()) {
      if (opt_dataset->count() > 0) cfg.dataset = dataset;
      print_dataset_summary(wf_gen_data(cfg));
    } else if (cmd_train->parsed()) {
      if (opt_epochs->count() > 0) cfg.train.epochs = epochs;
      const TrainResult result = wf_train(cfg);
      if (!result.metrics.empty()) {
        char line[64];
        std::snprintf(line, sizeof(line), "final test accuracy: %.4f\n",
                      result.metrics.back().test_acc);
        std::cout << line;
      }
    } else if (cmd_attack->parsed()) {
      const AttackScenario scenario =
          opt_at_scenario->count() > 0 ? scenario_from_name(scenario_s) : cfg.attack.scenario;
      const AttackEnv env = opt_at_env->count() > 0 ? env_from_name(env_s) : cfg.attack.environment;
      if (opt_iterations->count() > 0) cfg.attack.iterations = iterations;
      const AttackResult result = wf_attack(cfg, env, scenario);
      if (!result.history.empty()) {
        char line[64];
        std::snprintf(line, sizeof(line), "final loss: %.6f\n", result.history.back().loss);
        std::cout << line;
      }
      const double asr = wf_quick_asr(cfg, env, scenario, result.patch);
      char line[80];
      std::snprintf(line, sizeof(line), "quick ASR (16-scene probe): %.2f%%\n", asr);
      std::cout << line;
    } else if (cmd_eval->parsed()) {
      const AttackScenario scenario =
          opt_ev_scenario->count() > 0 ? scenario_from_name(scenario_s) : cfg.attack.scenario;
      const AttackEnv env = opt_ev_env->count() > 0 ? env_from_name(env_s) : cfg.attack.environment;
      const EvalReport report = wf_eval(cfg, env, scenario);
      char line[96];
      std::snprintf(line, sizeof(line), "%s/%s ASR: %.2f%% over %d trials\n",
                    report.environment.c_str(), report.scenario.c_str(), report.asr_percent,
                    report.trials);
      std::cout << line;
    } else if (cmd_table->parsed()) {
      std::cout << table_to_text(wf_table(cfg));
    } else if (cmd_render->parsed()) {
      const Scene scene = load_scene(scene_path);
      RenderRequest request;
      request.scene = &scene;
      request.spp = opt_spp->count() > 0 ? spp : 16;
      request.workers = cfg.workers;
      save_ppm(render(request), output_path);
      std::cout << "wrote " << output_path << '\n';
      if (opt_anchors->count() > 0 || opt_patch->count() > 0) {
        const std::vector<PlacementAnchor> anchors =
            valid_anchors(scene, cfg.eval.placement, cfg.workers);
        if (opt_anchors->count() > 0) {
          std::ofstream out(anchors_path, std::ios::binary);
          if (!out) throw IoError("cannot open " + anchors_path + " for writing");
          out << anchors_to_json(scene, anchors, cfg.eval.placement.visibility_grid);
          if (!out.flush()) throw IoError("failed writing " + anchors_path);
          std::cout << "wrote " << anchors_path << " (" << anchors.size() << " anchors)\n";
        }
        if (opt_patch->count() > 0) {
          const PatchTexture patch = load_patch(patch_path);
          Rng rng(hash2(cfg.seed, 0x9E7DULL));
          const PlacementAnchor& anchor = sample_placement(anchors, rng);
          const PatchQuad quad = make_render_quad(anchor);
          request.patch = &patch;
          request.quads = {&quad, 1};
          const std::filesystem::path patched = patched_preview_path(output_path);
          save_ppm(render(request), patched);
          std::cout << "wrote " << patched.string() << '\n';
        }
      }
    }
    return kExitOk;
  } catch (const ContractError& e) {
    log_error("cli", e.what());
    return kExitInternal;
  } catch (const OptimizationError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const PlacementError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const ParseError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const ValidationError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const ConfigError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const IoError& e) {
    log_error("cli", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    log_error("cli", e.what());
    return kExitInternal;
  }
}
