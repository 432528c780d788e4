#include "cargopatch/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "cargopatch/error.hpp"
#include "cargopatch/log.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/strings.hpp"

namespace cargopatch {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_config(const AttackConfig& cfg) {
  if (cfg.iterations < 0) throw ConfigError("attack iterations must be >= 0");
  if (cfg.learning_rate <= 0.0) throw ConfigError("attack learning rate must be positive");
  if (cfg.batch_size < 1) throw ConfigError("attack batch size must be >= 1");
  if (cfg.patches_per_scene < 1) throw ConfigError("patches_per_scene must be >= 1");
  if (cfg.patch_texels < 1) throw ConfigError("patch_texels must be >= 1");
  if (cfg.spp < 1) throw ConfigError("attack spp must be >= 1");
  if (cfg.placement_retries < 0) throw ConfigError("placement_retries must be >= 0");
  if (cfg.eot.brightness_jitter < 0.0 || cfg.eot.brightness_jitter >= 1.0)
    throw ConfigError("brightness_jitter must lie in [0, 1)");
}

void check_scenes(const AttackConfig& cfg, const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw ContractError("attack requires at least one scene");
  if (!scenario_is_targeted(cfg.scenario)) return;
  const OccupancyLabel source = scenario_source(cfg.scenario);
  for (std::size_t i = 0; i < scenes.size(); i++) {
    if (scenes[i].label != source) {
      throw ContractError("scene " + std::to_string(i) + " has label " +
                          std::string(label_name(scenes[i].label)) + " but a " +
                          scenario_name(cfg.scenario) + " attack starts from " +
                          label_name(source) + " scenes");
    }
  }
}

std::array<double, 3> targeted_grad_logits(const std::array<double, 3>& probs, int target) {
  // d/dz_j of -log(p_t + eps) through the softmax.
  const double scale = probs[target] / (probs[target] + kLossEps);
  std::array<double, 3> g{};
  for (int j = 0; j < 3; j++) g[j] = scale * (probs[j] - (j == target ? 1.0 : 0.0));
  return g;
}

std::array<double, 3> untargeted_grad_logits(const std::array<double, 3>& probs, int truth) {
  const double scale = probs[truth] / (probs[truth] + kLossEps);
  std::array<double, 3> g{};
  for (int j = 0; j < 3; j++) g[j] = scale * ((j == truth ? 1.0 : 0.0) - probs[j]);
  return g;
}

struct BatchItem {
  int scene_idx = -1;  // -1: no scene with a valid placement was drawn
  std::vector<int> anchor_ids;
  double light_scale = 1.0;
};

struct ItemOut {
  PatchTexture grad;
  double loss = 0.0;
  double target_prob = 0.0;
};

// Distinct anchor indices when possible (partial Fisher-Yates), falling back
// to sampling with replacement when the pool is smaller than the request.
std::vector<int> draw_anchor_ids(Rng& rng, int pool, int count) {
  std::vector<int> ids;
  ids.reserve(count);
  if (pool >= count) {
    std::vector<int> all(pool);
    std::iota(all.begin(), all.end(), 0);
    for (int k = 0; k < count; k++) {
      const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(pool - k)));
      std::swap(all[k], all[j]);
      ids.push_back(all[k]);
    }
  } else {
    for (int k = 0; k < count; k++)
      ids.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(pool))));
  }
  return ids;
}

// Shared EOT loop. The draw phase is strictly sequential so every random
// decision (and the 2D background cache fills done in `prepare`) happens in a
// fixed order; item evaluation then runs in parallel into per-slot outputs.
AttackResult run_eot(const AttackConfig& cfg, const std::vector<Scene>& scenes,
                     const std::vector<std::vector<PlacementAnchor>>& anchors,
                     const std::function<void(const BatchItem&)>& prepare,
                     const std::function<ItemOut(const BatchItem&, const PatchTexture&)>& eval,
                     const char* module) {
  AttackResult result;
  result.patch = PatchTexture::constant(cfg.patch_texels, cfg.patch_texels, 0.5);

  Rng rng(hash2(cfg.seed, 0xA77ACULL));
  if (cfg.random_init) {
    for (double& v : result.patch.data) v = rng.uniform();
  }
  quantize_f32(result.patch);

  const int n_scenes = static_cast<int>(scenes.size());
  std::vector<std::optional<std::vector<int>>> fixed_choice;
  if (!cfg.eot.resample_placement) fixed_choice.resize(scenes.size());

  const std::size_t n_param = result.patch.data.size();
  std::vector<double> m(n_param, 0.0), v(n_param, 0.0);
  result.history.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int iter = 0; iter < cfg.iterations; iter++) {
    std::vector<BatchItem> items(static_cast<std::size_t>(cfg.batch_size));
    for (BatchItem& item : items) {
      for (int attempt = 0; attempt <= cfg.placement_retries; attempt++) {
        const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_scenes)));
        if (anchors[idx].empty()) {
          result.skipped_draws++;
          log_warn(module, "scene " + std::to_string(idx) +
                               " has no valid placement, redrawing (iteration " +
                               std::to_string(iter) + ")");
          continue;
        }
        item.scene_idx = idx;
        break;
      }
      if (item.scene_idx < 0) continue;
      const int pool = static_cast<int>(anchors[item.scene_idx].size());
      if (cfg.eot.resample_placement) {
        item.anchor_ids = draw_anchor_ids(rng, pool, cfg.patches_per_scene);
      } else {
        auto& choice = fixed_choice[static_cast<std::size_t>(item.scene_idx)];
        if (!choice) choice = draw_anchor_ids(rng, pool, cfg.patches_per_scene);
        item.anchor_ids = *choice;
      }
      if (cfg.environment == AttackEnv::scene3d && cfg.eot.brightness_jitter > 0.0) {
        item.light_scale =
            1.0 + rng.uniform(-cfg.eot.brightness_jitter, cfg.eot.brightness_jitter);
      }
      prepare(item);
    }

    if (std::none_of(items.begin(), items.end(),
                     [](const BatchItem& it) { return it.scene_idx >= 0; })) {
      throw OptimizationError("no scene drawn at iteration " + std::to_string(iter) +
                              " has a valid patch placement");
    }

    std::vector<std::optional<ItemOut>> outs(items.size());
    parallel_for(items.size(), cfg.workers, [&](std::size_t i) {
      if (items[i].scene_idx < 0) return;
      outs[i] = eval(items[i], result.patch);
    });

    std::vector<double> grad(n_param, 0.0);
    double loss_sum = 0.0, prob_sum = 0.0;
    int used = 0;
    for (const auto& out : outs) {
      if (!out) continue;
      used++;
      loss_sum += out->loss;
      prob_sum += out->target_prob;
      for (std::size_t p = 0; p < n_param; p++) grad[p] += out->grad.data[p];
    }
    const double inv = 1.0 / used;

    const double t = iter + 1;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bias2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t p = 0; p < n_param; p++) {
      const double g = grad[p] * inv;
      m[p] = kAdamBeta1 * m[p] + (1.0 - kAdamBeta1) * g;
      v[p] = kAdamBeta2 * v[p] + (1.0 - kAdamBeta2) * g * g;
      result.patch.data[p] -=
          cfg.learning_rate * (m[p] / bias1) / (std::sqrt(v[p] / bias2) + kAdamEps);
    }
    project_patch(result.patch);
    quantize_f32(result.patch);

    result.history.push_back({iter, loss_sum * inv, prob_sum * inv});
    if (iter % 100 == 0 || iter == cfg.iterations - 1) {
      log_debug(module, "iter " + std::to_string(iter) + " loss " +
                            format_double(loss_sum * inv) + " target_prob " +
                            format_double(prob_sum * inv));
    }
  }
  return result;
}

std::vector<std::vector<PlacementAnchor>> anchors_per_scene(const AttackConfig& cfg,
                                                            const std::vector<Scene>& scenes,
                                                            const char* module) {
  std::vector<std::vector<PlacementAnchor>> anchors(scenes.size());
  parallel_for(scenes.size(), cfg.workers,
               [&](std::size_t i) { anchors[i] = valid_anchors(scenes[i], cfg.placement, 1); });
  int empty = 0;
  for (const auto& a : anchors)
    if (a.empty()) empty++;
  if (empty > 0) {
    log_warn(module, std::to_string(empty) + " of " + std::to_string(scenes.size()) +
                         " scenes have no valid placement");
  }
  if (empty == static_cast<int>(scenes.size()) && cfg.iterations > 0) {
    throw OptimizationError("no scene in the attack set has a valid patch placement");
  }
  return anchors;
}

// loss + target_prob for one classification under the configured scenario.
struct LossOut {
  double loss = 0.0;
  double target_prob = 0.0;
  std::array<double, 3> grad_logits{};
};

LossOut scenario_loss(const AttackConfig& cfg, const std::array<double, 3>& probs,
                      OccupancyLabel truth) {
  LossOut out;
  if (scenario_is_targeted(cfg.scenario)) {
    const int target = static_cast<int>(scenario_target(cfg.scenario));
    out.loss = loss_targeted(probs, scenario_target(cfg.scenario));
    out.target_prob = probs[target];
    out.grad_logits = targeted_grad_logits(probs, target);
  } else {
    const int truth_i = static_cast<int>(truth);
    out.loss = loss_untargeted(probs, truth);
    out.target_prob = probs[truth_i];
    out.grad_logits = untargeted_grad_logits(probs, truth_i);
  }
  return out;
}

}  // namespace

const char* scenario_name(AttackScenario scenario) {
  switch (scenario) {
    case AttackScenario::dos: return "dos";
    case AttackScenario::concealment: return "concealment";
    case AttackScenario::untargeted: return "untargeted";
  }
  throw ContractError("unknown attack scenario");
}

AttackScenario scenario_from_name(const std::string& name) {
  if (name == "dos") return AttackScenario::dos;
  if (name == "concealment") return AttackScenario::concealment;
  if (name == "untargeted") return AttackScenario::untargeted;
  throw ParseError("scenario", "unknown attack scenario \"" + name +
                                   "\" (expected dos, concealment or untargeted)");
}

const char* env_name(AttackEnv environment) {
  switch (environment) {
    case AttackEnv::scene3d: return "scene3d";
    case AttackEnv::image2d: return "image2d";
  }
  throw ContractError("unknown attack environment");
}

AttackEnv env_from_name(const std::string& name) {
  if (name == "scene3d") return AttackEnv::scene3d;
  if (name == "image2d") return AttackEnv::image2d;
  throw ParseError("environment",
                   "unknown attack environment \"" + name + "\" (expected scene3d or image2d)");
}

bool scenario_is_targeted(AttackScenario scenario) {
  return scenario != AttackScenario::untargeted;
}

OccupancyLabel scenario_source(AttackScenario scenario) {
  switch (scenario) {
    case AttackScenario::dos: return OccupancyLabel::Empty;
    case AttackScenario::concealment: return OccupancyLabel::Full;
    case AttackScenario::untargeted: break;
  }
  throw ContractError("untargeted attacks have no single source class");
}

OccupancyLabel scenario_target(AttackScenario scenario) {
  switch (scenario) {
    case AttackScenario::dos: return OccupancyLabel::Full;
    case AttackScenario::concealment: return OccupancyLabel::Empty;
    case AttackScenario::untargeted: break;
  }
  throw ContractError("untargeted attacks have no target class");
}

double loss_targeted(const std::array<double, 3>& probs, OccupancyLabel target) {
  return -std::log(probs[static_cast<int>(target)] + kLossEps);
}

double loss_untargeted(const std::array<double, 3>& probs, OccupancyLabel true_label) {
  return std::log(probs[static_cast<int>(true_label)] + kLossEps);
}

AttackResult optimize_patch_3d(const AttackConfig& cfg, const std::vector<Scene>& scenes,
                               const VictimModel& model) {
  check_config(cfg);
  check_scenes(cfg, scenes);
  const auto anchors = anchors_per_scene(cfg, scenes, "attack3d");

  auto eval = [&](const BatchItem& item, const PatchTexture& patch) {
    Scene scene = scenes[static_cast<std::size_t>(item.scene_idx)];
    if (item.light_scale != 1.0) {
      for (PointLight& light : scene.lights) light.intensity = light.intensity * item.light_scale;
    }
    std::vector<PatchQuad> quads;
    quads.reserve(item.anchor_ids.size());
    for (int id : item.anchor_ids)
      quads.push_back(make_render_quad(anchors[static_cast<std::size_t>(item.scene_idx)]
                                              [static_cast<std::size_t>(id)]));
    RenderRequest request;
    request.scene = &scene;
    request.patch = &patch;
    request.quads = quads;
    request.spp = cfg.spp;
    request.workers = 1;
    RenderTape tape;
    const ImageRGB image = render_with_tape(request, &tape);

    ForwardCache cache;
    const auto probs = forward(model, image, &cache);
    const LossOut lo = scenario_loss(cfg, probs, scene.label);

    ImageRGB grad_image;
    backward(model, cache, lo.grad_logits, nullptr, &grad_image);

    ItemOut out;
    out.grad = tape_backward(tape, grad_image);
    out.loss = lo.loss;
    out.target_prob = lo.target_prob;
    return out;
  };

  return run_eot(cfg, scenes, anchors, [](const BatchItem&) {}, eval, "attack3d");
}

std::pair<ImageRGB, RenderTape> composite_2d(const ImageRGB& background,
                                             const PatchTexture& patch, const Homography& h) {
  if (background.width < 1 || background.height < 1)
    throw ContractError("composite_2d requires a non-empty background");
  if (patch.height < 1 || patch.width < 1)
    throw ContractError("composite_2d requires a non-empty patch texture");
  if (std::abs(h.det()) < 1e-12)
    throw ContractError("composite_2d homography is singular");
  const Mat3 hinv = h.inverse();

  ImageRGB image = background;
  RenderTape tape;
  tape.width = background.width;
  tape.height = background.height;
  tape.patch_height = patch.height;
  tape.patch_width = patch.width;
  tape.pre_clamp = background.data;

  // Bounding box of the mapped texture corners, with slack; the exact
  // per-pixel membership test below is what decides coverage.
  int x0 = 0, x1 = background.width - 1, y0 = 0, y1 = background.height - 1;
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = max_x;
  bool bounded = true;
  const double corners[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (const auto& c : corners) {
    const Vec3 q = h * Vec3{c[0], c[1], 1.0};
    if (q.z < 1e-12) {
      bounded = false;
      break;
    }
    min_x = std::min(min_x, q.x / q.z);
    max_x = std::max(max_x, q.x / q.z);
    min_y = std::min(min_y, q.y / q.z);
    max_y = std::max(max_y, q.y / q.z);
  }
  if (bounded) {
    x0 = std::max(0, static_cast<int>(std::floor(min_x - 1.0)));
    x1 = std::min(background.width - 1, static_cast<int>(std::ceil(max_x + 1.0)));
    y0 = std::max(0, static_cast<int>(std::floor(min_y - 1.0)));
    y1 = std::min(background.height - 1, static_cast<int>(std::ceil(max_y + 1.0)));
  }

  for (int y = y0; y <= y1; y++) {
    for (int x = x0; x <= x1; x++) {
      const Vec3 q = hinv * Vec3{x + 0.5, y + 0.5, 1.0};
      if (std::abs(q.z) < 1e-12) continue;
      const double u = q.x / q.z;
      const double v = q.y / q.z;
      if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;

      const auto taps = bilinear_taps(patch.height, patch.width, u, v);
      Rgb value{0.0, 0.0, 0.0};
      for (const BilinearTap& tap : taps) {
        const int ty = tap.texel / patch.width;
        const int tx = tap.texel % patch.width;
        value += patch.texel(ty, tx) * tap.weight;
      }
      image.set_pixel(x, y, value);
      const int pixel = y * background.width + x;
      const std::size_t base = static_cast<std::size_t>(pixel) * 3;
      tape.pre_clamp[base] = value.x;
      tape.pre_clamp[base + 1] = value.y;
      tape.pre_clamp[base + 2] = value.z;
      for (const BilinearTap& tap : taps) {
        if (tap.weight == 0.0) continue;
        tape.entries.push_back({pixel, tap.texel, {tap.weight, tap.weight, tap.weight}});
      }
    }
  }
  return {std::move(image), std::move(tape)};
}

AttackResult optimize_patch_2d(const AttackConfig& cfg, const std::vector<Scene>& scenes,
                               const VictimModel& model) {
  check_config(cfg);
  check_scenes(cfg, scenes);
  const auto anchors = anchors_per_scene(cfg, scenes, "attack2d");

  // Clean-plate cache: each distinct scene is rendered at most once per run,
  // filled during the sequential draw phase.
  std::vector<std::optional<ImageRGB>> backgrounds(scenes.size());
  int background_renders = 0;
  auto prepare = [&](const BatchItem& item) {
    auto& slot = backgrounds[static_cast<std::size_t>(item.scene_idx)];
    if (slot) return;
    RenderRequest request;
    request.scene = &scenes[static_cast<std::size_t>(item.scene_idx)];
    request.spp = cfg.spp;
    request.workers = cfg.workers;
    slot = render(request);
    background_renders++;
  };

  auto eval = [&](const BatchItem& item, const PatchTexture& patch) {
    const Scene& scene = scenes[static_cast<std::size_t>(item.scene_idx)];
    const auto& scene_anchors = anchors[static_cast<std::size_t>(item.scene_idx)];
    ImageRGB image = *backgrounds[static_cast<std::size_t>(item.scene_idx)];

    // Later quads overwrite earlier ones, so only the last writer of a pixel
    // keeps its tape entries.
    std::vector<int> owner(static_cast<std::size_t>(image.width) * image.height, -1);
    std::vector<RenderTape> tapes;
    tapes.reserve(item.anchor_ids.size());
    for (std::size_t k = 0; k < item.anchor_ids.size(); k++) {
      const PlacementAnchor& anchor =
          scene_anchors[static_cast<std::size_t>(item.anchor_ids[k])];
      const Homography h = patch_homography(scene.camera, anchor);
      auto [next, tape] = composite_2d(image, patch, h);
      image = std::move(next);
      for (const TapeEntry& entry : tape.entries)
        owner[static_cast<std::size_t>(entry.pixel)] = static_cast<int>(k);
      tapes.push_back(std::move(tape));
    }
    RenderTape merged;
    merged.width = image.width;
    merged.height = image.height;
    merged.patch_height = patch.height;
    merged.patch_width = patch.width;
    merged.pre_clamp = image.data;
    for (std::size_t k = 0; k < tapes.size(); k++) {
      for (const TapeEntry& entry : tapes[k].entries) {
        if (owner[static_cast<std::size_t>(entry.pixel)] == static_cast<int>(k))
          merged.entries.push_back(entry);
      }
    }

    ForwardCache cache;
    const auto probs = forward(model, image, &cache);
    const LossOut lo = scenario_loss(cfg, probs, scene.label);

    ImageRGB grad_image;
    backward(model, cache, lo.grad_logits, nullptr, &grad_image);

    ItemOut out;
    out.grad = tape_backward(merged, grad_image);
    out.loss = lo.loss;
    out.target_prob = lo.target_prob;
    return out;
  };

  AttackResult result = run_eot(cfg, scenes, anchors, prepare, eval, "attack2d");
  result.background_renders = background_renders;
  return result;
}

void save_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "iter,loss,target_prob\n";
  for (const LossRecord& rec : history) {
    out << rec.iter << ',' << format_double(rec.loss) << ',' << format_double(rec.target_prob)
        << '\n';
  }
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + key, "missing field \"" + where + key + "\"");
  return *it;
}

double num_at(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw ParseError(where + key, "field \"" + where + key + "\" must be a number");
  return v.get<double>();
}

int int_at(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer())
    throw ParseError(where + key, "field \"" + where + key + "\" must be an integer");
  return v.get<int>();
}

bool bool_at(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_boolean())
    throw ParseError(where + key, "field \"" + where + key + "\" must be a boolean");
  return v.get<bool>();
}

std::string str_at(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string())
    throw ParseError(where + key, "field \"" + where + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace

std::string attack_config_to_json(const AttackConfig& cfg) {
  json j;
  j["scenario"] = scenario_name(cfg.scenario);
  j["environment"] = env_name(cfg.environment);
  j["iterations"] = cfg.iterations;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["patches_per_scene"] = cfg.patches_per_scene;
  j["patch_texels"] = cfg.patch_texels;
  j["eot"] = {{"resample_placement", cfg.eot.resample_placement},
              {"brightness_jitter", cfg.eot.brightness_jitter}};
  j["seed"] = cfg.seed;
  j["spp"] = cfg.spp;
  j["workers"] = cfg.workers;
  j["placement_retries"] = cfg.placement_retries;
  j["random_init"] = cfg.random_init;
  j["placement"] = json::parse(placement_config_to_json(cfg.placement));
  return j.dump(2) + "\n";
}

AttackConfig attack_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("", "attack config must be a JSON object");

  AttackConfig cfg;
  cfg.scenario = scenario_from_name(str_at(j, "scenario", ""));
  cfg.environment = env_from_name(str_at(j, "environment", ""));
  cfg.iterations = int_at(j, "iterations", "");
  cfg.learning_rate = num_at(j, "learning_rate", "");
  cfg.batch_size = int_at(j, "batch_size", "");
  cfg.patches_per_scene = int_at(j, "patches_per_scene", "");
  cfg.patch_texels = int_at(j, "patch_texels", "");
  const json& eot = require(j, "eot", "");
  cfg.eot.resample_placement = bool_at(eot, "resample_placement", "eot.");
  cfg.eot.brightness_jitter = num_at(eot, "brightness_jitter", "eot.");
  const json& seed = require(j, "seed", "");
  if (!seed.is_number_unsigned()) throw ParseError("seed", "field \"seed\" must be unsigned");
  cfg.seed = seed.get<std::uint64_t>();
  cfg.spp = int_at(j, "spp", "");
  cfg.workers = int_at(j, "workers", "");
  cfg.placement_retries = int_at(j, "placement_retries", "");
  cfg.random_init = bool_at(j, "random_init", "");
  cfg.placement = placement_config_from_json(require(j, "placement", "").dump());
  return cfg;
}

}  // namespace cargopatch
