#include "cargopatch/placement.hpp"

#include <cmath>
#include <json.hpp>

#include "cargopatch/error.hpp"
#include "cargopatch/parallel.hpp"

namespace cargopatch {

namespace {

Vec3 axis_vec3(int axis) {
  switch (axis) {
    case 0: return {1.0, 0.0, 0.0};
    case 1: return {0.0, 1.0, 0.0};
    default: return {0.0, 0.0, 1.0};
  }
}

bool surface_allowed(const SurfaceId& surface, const FilterCriteria& criteria) {
  switch (surface.kind) {
    case SurfaceKind::Floor: return criteria.allow_floor;
    case SurfaceKind::WallLeft:
    case SurfaceKind::WallRight:
    case SurfaceKind::WallFront: return criteria.allow_walls;
    case SurfaceKind::Cargo: return criteria.allow_cargo;
    case SurfaceKind::Ceiling: return criteria.allow_ceiling;
    case SurfaceKind::Patch: return false;
  }
  return false;
}

double polygon_area(const std::array<Vec2, 4>& pts) {
  double twice = 0.0;
  for (int i = 0; i < 4; i++) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % 4];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) * 0.5;
}

}  // namespace

Vec2 apply_homography(const Homography& h, double u, double v) {
  const Vec3 mapped = h * Vec3{u, v, 1.0};
  return {mapped.x / mapped.z, mapped.y / mapped.z};
}

std::vector<Hit> cast_anchor_rays(const Scene& scene, int grid_n, int workers) {
  if (grid_n < 2) throw ContractError("anchor grid must be at least 2x2");
  const Camera& cam = scene.camera;
  std::vector<std::vector<Hit>> rows(grid_n);
  parallel_for(grid_n, workers, [&](std::size_t gy) {
    rows[gy].reserve(grid_n);
    for (int gx = 0; gx < grid_n; gx++) {
      const double sx = (gx + 0.5) * cam.width / grid_n;
      const double sy = (static_cast<double>(gy) + 0.5) * cam.height / grid_n;
      const Ray ray = camera_ray_at(cam, sx, sy);
      if (const auto hit = intersect(scene, {}, ray)) rows[gy].push_back(*hit);
    }
  });
  std::vector<Hit> hits;
  for (auto& row : rows) hits.insert(hits.end(), row.begin(), row.end());
  return hits;
}

PlacementAnchor build_patch_quad(const Hit& hit, const Vec2& patch_size) {
  const Vec3 n = hit.normal;
  if (std::abs(length(n) - 1.0) > 1e-6) throw ContractError("hit normal must be unit length");
  if (patch_size.x <= 0.0 || patch_size.y <= 0.0)
    throw ContractError("patch size must be positive");

  int least = 0;
  for (int a = 1; a < 3; a++)
    if (std::abs(n[a]) < std::abs(n[least])) least = a;
  const Vec3 u = normalize(cross(axis_vec3(least), n));
  const Vec3 v = cross(n, u);

  PlacementAnchor anchor;
  anchor.position = hit.position;
  anchor.normal = n;
  anchor.tangent_u = u;
  anchor.tangent_v = v;
  anchor.surface = hit.surface;
  anchor.patch_size = patch_size;
  const Vec3 half_u = u * (patch_size.x * 0.5);
  const Vec3 half_v = v * (patch_size.y * 0.5);
  anchor.quad_corners = {hit.position - half_u - half_v, hit.position + half_u - half_v,
                         hit.position + half_u + half_v, hit.position - half_u + half_v};
  return anchor;
}

std::vector<PlacementAnchor> filter_anchors(const Scene& scene, const std::vector<Hit>& hits,
                                            const FilterCriteria& criteria,
                                            const Vec2& patch_size) {
  std::vector<PlacementAnchor> out;
  const Camera& cam = scene.camera;
  for (const Hit& hit : hits) {
    if (!surface_allowed(hit.surface, criteria)) continue;
    const Vec3 view = normalize(hit.position - cam.position);
    if (std::abs(dot(hit.normal, view)) < criteria.min_cos_view) continue;

    const PlacementAnchor anchor = build_patch_quad(hit, patch_size);
    const FaceRect rect = host_face_rect(scene, anchor.surface, anchor.normal);
    bool ok = true;
    std::array<Vec2, 4> projected;
    for (int i = 0; i < 4 && ok; i++) {
      const Vec3 rel = anchor.quad_corners[i] - rect.origin;
      if (std::abs(dot(rel, rect.normal)) > 1e-9) ok = false;
      const double a = dot(rel, rect.axis_u), b = dot(rel, rect.axis_v);
      if (a < criteria.margin - 1e-12 || a > rect.extent_u - criteria.margin + 1e-12 ||
          b < criteria.margin - 1e-12 || b > rect.extent_v - criteria.margin + 1e-12)
        ok = false;
      if (ok && !project_point(cam, anchor.quad_corners[i], &projected[i])) ok = false;
    }
    if (!ok) continue;
    if (polygon_area(projected) < criteria.min_pixel_footprint) continue;
    out.push_back(anchor);
  }
  return out;
}

const PlacementAnchor& sample_placement(const std::vector<PlacementAnchor>& anchors, Rng& rng) {
  if (anchors.empty()) throw PlacementError("no valid placement anchors to sample from");
  return anchors[rng.below(anchors.size())];
}

double check_visibility(const Scene& scene, const PlacementAnchor& anchor,
                        const Camera& camera, int grid_m) {
  if (grid_m < 2) throw ContractError("visibility grid must be at least 2x2");
  const PatchQuad quad = make_render_quad(anchor);
  const std::span<const PatchQuad> quads(&quad, 1);
  int visible = 0;
  for (int j = 0; j < grid_m; j++)
    for (int i = 0; i < grid_m; i++) {
      const Vec3 point = quad.origin + quad.edge_u * ((i + 0.5) / grid_m) +
                         quad.edge_v * ((j + 0.5) / grid_m);
      const Vec3 dir = point - camera.position;
      const Ray ray{camera.position, normalize(dir)};
      const auto hit = intersect(scene, quads, ray);
      if (hit && hit->surface.kind == SurfaceKind::Patch) visible++;
    }
  return static_cast<double>(visible) / (static_cast<double>(grid_m) * grid_m);
}

std::vector<PlacementAnchor> valid_anchors(const Scene& scene, const PlacementConfig& config,
                                           int workers) {
  const std::vector<Hit> hits = cast_anchor_rays(scene, config.grid_n, workers);
  std::vector<PlacementAnchor> anchors =
      filter_anchors(scene, hits, config.criteria, config.patch_size);
  std::vector<char> keep(anchors.size(), 0);
  parallel_for(anchors.size(), workers, [&](std::size_t i) {
    keep[i] = check_visibility(scene, anchors[i], scene.camera, config.visibility_grid) >=
              config.min_visibility;
  });
  std::vector<PlacementAnchor> out;
  for (std::size_t i = 0; i < anchors.size(); i++)
    if (keep[i]) out.push_back(anchors[i]);
  return out;
}

PatchQuad make_render_quad(const PlacementAnchor& anchor) {
  PatchQuad quad;
  const Vec3 lift = anchor.normal * kPatchLift;
  quad.origin = anchor.quad_corners[0] + lift;
  quad.edge_u = anchor.quad_corners[1] - anchor.quad_corners[0];
  quad.edge_v = anchor.quad_corners[3] - anchor.quad_corners[0];
  quad.normal = anchor.normal;
  quad.host = anchor.surface;
  return quad;
}

Homography patch_homography(const Camera& camera, const PlacementAnchor& anchor) {
  for (const Vec3& corner : anchor.quad_corners) {
    Vec2 unused;
    if (!project_point(camera, corner, &unused))
      throw PlacementError("patch corner behind the camera: degenerate view");
  }
  const CameraFrame f = camera_frame(camera);
  const double sx = camera.width / (2.0 * f.tan_half * f.aspect);
  const double sy = camera.height / (2.0 * f.tan_half);
  const Mat3 k{{sx, 0.0, camera.width * 0.5, 0.0, -sy, camera.height * 0.5, 0.0, 0.0, 1.0}};
  const Mat3 rot = Mat3::from_rows(f.right, f.up, f.forward);
  const Vec3 edge_u = anchor.quad_corners[1] - anchor.quad_corners[0];
  const Vec3 edge_v = anchor.quad_corners[3] - anchor.quad_corners[0];
  const Vec3 offset = anchor.quad_corners[0] - camera.position;
  const Homography h = k * rot * Mat3::from_columns(edge_u, edge_v, offset);
  if (std::abs(h.det()) < 1e-12) throw PlacementError("degenerate homography");
  return h;
}

std::string anchors_to_json(const Scene& scene, const std::vector<PlacementAnchor>& anchors,
                            int visibility_grid) {
  using nlohmann::json;
  auto vec3j = [](const Vec3& v) { return json::array({v.x, v.y, v.z}); };
  json list = json::array();
  for (const PlacementAnchor& anchor : anchors) {
    json corners = json::array();
    for (const Vec3& c : anchor.quad_corners) corners.push_back(vec3j(c));
    list.push_back(
        {{"position", vec3j(anchor.position)},
         {"normal", vec3j(anchor.normal)},
         {"tangent_u", vec3j(anchor.tangent_u)},
         {"tangent_v", vec3j(anchor.tangent_v)},
         {"surface", surface_kind_name(anchor.surface.kind)},
         {"surface_index", anchor.surface.index},
         {"patch_size", json::array({anchor.patch_size.x, anchor.patch_size.y})},
         {"corners", corners},
         {"visibility",
          check_visibility(scene, anchor, scene.camera, visibility_grid)}});
  }
  return list.dump(2) + "\n";
}

std::string placement_config_to_json(const PlacementConfig& config) {
  using nlohmann::json;
  json j = {{"grid_n", config.grid_n},
            {"patch_size", {config.patch_size.x, config.patch_size.y}},
            {"min_visibility", config.min_visibility},
            {"visibility_grid", config.visibility_grid},
            {"criteria",
             {{"min_cos_view", config.criteria.min_cos_view},
              {"min_pixel_footprint", config.criteria.min_pixel_footprint},
              {"margin", config.criteria.margin},
              {"allow_floor", config.criteria.allow_floor},
              {"allow_walls", config.criteria.allow_walls},
              {"allow_cargo", config.criteria.allow_cargo},
              {"allow_ceiling", config.criteria.allow_ceiling}}}};
  return j.dump(2) + "\n";
}

PlacementConfig placement_config_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("", "placement config must be a JSON object");
  try {
    PlacementConfig config;
    config.grid_n = j.at("grid_n").get<int>();
    const json& ps = j.at("patch_size");
    if (!ps.is_array() || ps.size() != 2)
      throw ParseError("patch_size", "patch_size must be [u, v]");
    config.patch_size = {ps[0].get<double>(), ps[1].get<double>()};
    config.min_visibility = j.at("min_visibility").get<double>();
    config.visibility_grid = j.at("visibility_grid").get<int>();
    const json& c = j.at("criteria");
    config.criteria.min_cos_view = c.at("min_cos_view").get<double>();
    config.criteria.min_pixel_footprint = c.at("min_pixel_footprint").get<double>();
    config.criteria.margin = c.at("margin").get<double>();
    config.criteria.allow_floor = c.at("allow_floor").get<bool>();
    config.criteria.allow_walls = c.at("allow_walls").get<bool>();
    config.criteria.allow_cargo = c.at("allow_cargo").get<bool>();
    config.criteria.allow_ceiling = c.at("allow_ceiling").get<bool>();
    return config;
  } catch (const json::exception& e) {
    throw ParseError("", std::string("malformed placement config: ") + e.what());
  }
}

}  // namespace cargopatch
