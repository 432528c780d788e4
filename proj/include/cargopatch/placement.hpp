#pragma once

// Surface-based patch placement: cast a dense camera-ray grid, keep hits that
// satisfy geometric criteria (non-grazing view, edge margin, projected size,
// allowed surface kinds, visibility), and sample an anchor among the
// survivors. Also builds the homography the 2D compositing baseline uses.

#include <array>
#include <string>
#include <vector>

#include "cargopatch/math.hpp"
#include "cargopatch/render.hpp"
#include "cargopatch/rng.hpp"
#include "cargopatch/scene.hpp"

namespace cargopatch {

struct PlacementAnchor {
  Vec3 position;            // on the host surface
  Vec3 normal;              // unit
  Vec3 tangent_u, tangent_v;  // unit; {u, v, n} right-handed
  SurfaceId surface;
  Vec2 patch_size;          // meters along u, v
  std::array<Vec3, 4> quad_corners;  // counterclockwise from the normal side;
                                     // corner 0 is texture (u,v) = (0,0)
};

struct FilterCriteria {
  double min_cos_view = 0.2;
  double min_pixel_footprint = 100.0;  // projected quad area, square pixels
  double margin = 0.05;                // meters inset from surface edges
  bool allow_floor = true;
  bool allow_walls = true;
  bool allow_cargo = true;
  bool allow_ceiling = false;
};

struct PlacementConfig {
  int grid_n = 32;
  FilterCriteria criteria;
  Vec2 patch_size = {0.6, 0.6};
  double min_visibility = 0.9;
  int visibility_grid = 5;
};

// Texture (u,v,1) -> homogeneous pixel coordinates.
using Homography = Mat3;

Vec2 apply_homography(const Homography& h, double u, double v);

// One primary-ray hit per grid cell that strikes geometry, ordered by cell.
std::vector<Hit> cast_anchor_rays(const Scene& scene, int grid_n, int workers = 1);

// Deterministic tangent frame + quad corners around the hit point.
PlacementAnchor build_patch_quad(const Hit& hit, const Vec2& patch_size);

std::vector<PlacementAnchor> filter_anchors(const Scene& scene, const std::vector<Hit>& hits,
                                            const FilterCriteria& criteria,
                                            const Vec2& patch_size);

// Uniform draw; throws a placement error on an empty list.
const PlacementAnchor& sample_placement(const std::vector<PlacementAnchor>& anchors, Rng& rng);

// Fraction of a grid_m x grid_m lattice of quad points whose camera ray hits
// the patch first.
double check_visibility(const Scene& scene, const PlacementAnchor& anchor,
                        const Camera& camera, int grid_m);

// Full pipeline: cast, filter, keep anchors with sufficient visibility.
std::vector<PlacementAnchor> valid_anchors(const Scene& scene, const PlacementConfig& config,
                                           int workers = 1);

// The renderable quad: anchor rectangle lifted off its host surface.
PatchQuad make_render_quad(const PlacementAnchor& anchor);

Homography patch_homography(const Camera& camera, const PlacementAnchor& anchor);

// Debug dump including per-anchor visibility fractions.
std::string anchors_to_json(const Scene& scene, const std::vector<PlacementAnchor>& anchors,
                            int visibility_grid);

std::string placement_config_to_json(const PlacementConfig& config);
PlacementConfig placement_config_from_json(const std::string& text);

}  // namespace cargopatch
