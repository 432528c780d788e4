#include "cargopatch/render.hpp"

#include <cmath>

#include "cargopatch/error.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/rng.hpp"

namespace cargopatch {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kShadowEps = 1e-6;

Vec3 axis_vec(int axis, double s) {
  switch (axis) {
    case 0: return {s, 0.0, 0.0};
    case 1: return {0.0, s, 0.0};
    default: return {0.0, 0.0, s};
  }
}

// Nearest hit against one interior face of the trailer shell.
void intersect_shell(const Scene& scene, const Ray& ray, double& best_t, Hit& best) {
  const auto& tr = scene.trailer;
  struct Face {
    int axis;
    double coord;
    double normal_sign;  // interior-facing
    SurfaceKind kind;
  };
  const Face faces[5] = {{1, 0.0, 1.0, SurfaceKind::Floor},
                         {1, tr.interior_height, -1.0, SurfaceKind::Ceiling},
                         {0, 0.0, 1.0, SurfaceKind::WallLeft},
                         {0, tr.interior_width, -1.0, SurfaceKind::WallRight},
                         {2, tr.interior_length, -1.0, SurfaceKind::WallFront}};
  const double bounds[3] = {tr.interior_width, tr.interior_height, tr.interior_length};
  for (const Face& face : faces) {
    const double d = ray.direction[face.axis];
    if (std::abs(d) < 1e-15) continue;
    const double t = (face.coord - ray.origin[face.axis]) / d;
    if (t <= kRayEps || t >= best_t) continue;
    const Vec3 p = ray.origin + ray.direction * t;
    bool inside = true;
    for (int a = 0; a < 3; a++) {
      if (a == face.axis) continue;
      if (p[a] < -kRayEps || p[a] > bounds[a] + kRayEps) inside = false;
    }
    if (!inside) continue;
    const Vec3 n = axis_vec(face.axis, face.normal_sign);
    if (dot(n, ray.direction) >= 0.0) continue;
    best_t = t;
    best = {t, p, n, {face.kind, -1}, {}};
  }
}

void intersect_boxes(const Scene& scene, const Ray& ray, double& best_t, Hit& best) {
  for (std::size_t i = 0; i < scene.cargo.size(); i++) {
    const CargoBox& box = scene.cargo[i];
    const Vec3 hi = box.max_corner();
    double tmin = -1e300, tmax = 1e300;
    int axis_min = -1, axis_max = -1;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; a++) {
      const double o = ray.origin[a], d = ray.direction[a];
      const double lo = box.min_corner[a], up = hi[a];
      if (std::abs(d) < 1e-15) {
        if (o < lo || o > up) miss = true;
        continue;
      }
      double t1 = (lo - o) / d, t2 = (up - o) / d;
      if (t1 > t2) std::swap(t1, t2);
      if (t1 > tmin) {
        tmin = t1;
        axis_min = a;
      }
      if (t2 < tmax) {
        tmax = t2;
        axis_max = a;
      }
      if (tmin > tmax) miss = true;
    }
    if (miss || tmax <= kRayEps) continue;
    double t;
    Vec3 n;
    if (tmin > kRayEps) {
      t = tmin;
      n = axis_vec(axis_min, ray.direction[axis_min] > 0.0 ? -1.0 : 1.0);
    } else {
      // Ray starts inside the box; report the exit face, normal toward origin.
      t = tmax;
      n = axis_vec(axis_max, ray.direction[axis_max] > 0.0 ? -1.0 : 1.0);
    }
    if (t >= best_t) continue;
    best_t = t;
    best = {t, ray.origin + ray.direction * t, n, {SurfaceKind::Cargo, static_cast<int>(i)}, {}};
  }
}

void intersect_quads(std::span<const PatchQuad> quads, const Ray& ray, double& best_t,
                     Hit& best) {
  for (std::size_t i = 0; i < quads.size(); i++) {
    const PatchQuad& quad = quads[i];
    const double denom = dot(ray.direction, quad.normal);
    if (std::abs(denom) < 1e-12) continue;
    const double t = dot(quad.origin - ray.origin, quad.normal) / denom;
    if (t <= kRayEps || t >= best_t) continue;
    const Vec3 rel = ray.origin + ray.direction * t - quad.origin;
    const double u = dot(rel, quad.edge_u) / dot(quad.edge_u, quad.edge_u);
    const double v = dot(rel, quad.edge_v) / dot(quad.edge_v, quad.edge_v);
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;
    const Vec3 n = denom < 0.0 ? quad.normal : -quad.normal;
    best_t = t;
    best = {t, ray.origin + ray.direction * t, n,
            {SurfaceKind::Patch, static_cast<int>(i)}, {u, v}};
  }
}

Rgb surface_albedo(const Scene& scene, const SurfaceId& surface) {
  switch (surface.kind) {
    case SurfaceKind::Floor: return scene.trailer.floor_albedo;
    case SurfaceKind::Ceiling: return scene.trailer.ceiling_albedo;
    case SurfaceKind::WallLeft:
    case SurfaceKind::WallRight:
    case SurfaceKind::WallFront: return scene.trailer.wall_albedo;
    case SurfaceKind::Cargo: return scene.cargo[surface.index].albedo;
    case SurfaceKind::Patch: break;
  }
  throw ContractError("patch albedo comes from the texture, not the scene");
}

void validate_quads(const Scene& scene, std::span<const PatchQuad> quads) {
  for (const PatchQuad& quad : quads) {
    const FaceRect rect = host_face_rect(scene, quad.host, quad.normal);
    const Vec3 corners[4] = {quad.origin, quad.origin + quad.edge_u,
                             quad.origin + quad.edge_u + quad.edge_v, quad.origin + quad.edge_v};
    for (const Vec3& corner : corners) {
      const Vec3 rel = corner - rect.origin;
      const double off = dot(rel, rect.normal);
      if (off < 0.0 || off > 10.0 * kPatchLift)
        throw PlacementError("patch quad floats off its host surface");
      const double a = dot(rel, rect.axis_u), b = dot(rel, rect.axis_v);
      if (a < -1e-9 || a > rect.extent_u + 1e-9 || b < -1e-9 || b > rect.extent_v + 1e-9)
        throw PlacementError("patch quad extends past its host surface");
    }
  }
}

Vec2 sample_jitter(std::uint64_t seed, std::uint64_t pixel_id, int sample, int strata) {
  const double u0 = hash01(seed, pixel_id, static_cast<std::uint64_t>(sample), 0);
  const double u1 = hash01(seed, pixel_id, static_cast<std::uint64_t>(sample), 1);
  if (strata > 0) {
    const int sx = sample % strata, sy = sample / strata;
    return {(sx + u0) / strata, (sy + u1) / strata};
  }
  return {u0, u1};
}

ImageRGB render_impl(const RenderRequest& request, RenderTape* tape) {
  const Scene& scene = *request.scene;
  const Camera& cam = scene.camera;
  if (request.spp < 1) throw ContractError("spp must be >= 1");
  if (request.patch && request.quads.empty())
    throw ContractError("a patch texture needs a placement quad");
  if (!request.patch && !request.quads.empty())
    throw ContractError("placement quads need a patch texture");
  validate_quads(scene, request.quads);

  ImageRGB image = ImageRGB::zeros(cam.width, cam.height);
  if (tape) {
    tape->width = cam.width;
    tape->height = cam.height;
    tape->patch_height = request.patch ? request.patch->height : 0;
    tape->patch_width = request.patch ? request.patch->width : 0;
    tape->pre_clamp.assign(image.data.size(), 0.0);
    tape->entries.clear();
  }

  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(request.spp))));
  const int strata = g * g == request.spp ? g : 0;

  constexpr int kTileRows = 8;
  const int tile_count = (cam.height + kTileRows - 1) / kTileRows;
  std::vector<std::vector<TapeEntry>> tile_entries(tape ? tile_count : 0);

  parallel_for(tile_count, request.workers, [&](std::size_t tile) {
    const int y_begin = static_cast<int>(tile) * kTileRows;
    const int y_end = std::min(cam.height, y_begin + kTileRows);
    // Per-pixel accumulation of tape weights, merged by texel.
    std::vector<std::pair<int, Rgb>> texel_acc;
    for (int y = y_begin; y < y_end; y++) {
      for (int x = 0; x < cam.width; x++) {
        const std::uint64_t pixel_id = static_cast<std::uint64_t>(y) * cam.width + x;
        Rgb accum;
        texel_acc.clear();
        for (int s = 0; s < request.spp; s++) {
          const Vec2 jitter = sample_jitter(scene.seed, pixel_id, s, strata);
          const Ray ray = camera_ray(cam, x, y, jitter);
          const auto hit = intersect(scene, request.quads, ray);
          if (!hit) continue;
          const Rgb factor = shade_factor(scene, request.quads, *hit);
          if (hit->surface.kind == SurfaceKind::Patch) {
            const Rgb albedo = sample_bilinear(*request.patch, hit->uv.x, hit->uv.y);
            accum += hadamard(albedo, factor);
            if (tape) {
              for (const BilinearTap& tap :
                   bilinear_taps(request.patch->height, request.patch->width, hit->uv.x,
                                 hit->uv.y)) {
                bool merged = false;
                for (auto& [texel, w] : texel_acc)
                  if (texel == tap.texel) {
                    w += factor * tap.weight;
                    merged = true;
                    break;
                  }
                if (!merged) texel_acc.emplace_back(tap.texel, factor * tap.weight);
              }
            }
          } else {
            accum += hadamard(surface_albedo(scene, hit->surface), factor);
          }
        }
        const Rgb pre = accum / request.spp;
        image.set_pixel(x, y, clamp01(pre));
        if (tape) {
          tape->pre_clamp[pixel_id * 3 + 0] = pre.x;
          tape->pre_clamp[pixel_id * 3 + 1] = pre.y;
          tape->pre_clamp[pixel_id * 3 + 2] = pre.z;
          for (const auto& [texel, w] : texel_acc)
            tile_entries[tile].push_back(
                {static_cast<int>(pixel_id), texel, w / request.spp});
        }
      }
    }
  });

  if (tape)
    for (auto& chunk : tile_entries)
      tape->entries.insert(tape->entries.end(), chunk.begin(), chunk.end());
  return image;
}

}  // namespace

CameraFrame camera_frame(const Camera& cam) {
  CameraFrame b;
  b.forward = normalize(cam.look_at - cam.position);
  b.right = normalize(cross(b.forward, cam.up));
  b.up = cross(b.right, b.forward);
  b.tan_half = std::tan(deg_to_rad(cam.vfov) * 0.5);
  b.aspect = static_cast<double>(cam.width) / cam.height;
  return b;
}

const char* surface_kind_name(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Floor: return "floor";
    case SurfaceKind::WallLeft: return "wall_left";
    case SurfaceKind::WallRight: return "wall_right";
    case SurfaceKind::WallFront: return "wall_front";
    case SurfaceKind::Ceiling: return "ceiling";
    case SurfaceKind::Cargo: return "cargo";
    case SurfaceKind::Patch: return "patch";
  }
  return "unknown";
}

FaceRect host_face_rect(const Scene& scene, SurfaceId surface, const Vec3& normal) {
  const auto& tr = scene.trailer;
  switch (surface.kind) {
    case SurfaceKind::Floor:
      return {{0, 0, 0}, {1, 0, 0}, {0, 0, 1}, tr.interior_width, tr.interior_length, {0, 1, 0}};
    case SurfaceKind::Ceiling:
      return {{0, tr.interior_height, 0}, {1, 0, 0}, {0, 0, 1}, tr.interior_width,
              tr.interior_length, {0, -1, 0}};
    case SurfaceKind::WallLeft:
      return {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, tr.interior_length, tr.interior_height, {1, 0, 0}};
    case SurfaceKind::WallRight:
      return {{tr.interior_width, 0, 0}, {0, 0, 1}, {0, 1, 0}, tr.interior_length,
              tr.interior_height, {-1, 0, 0}};
    case SurfaceKind::WallFront:
      return {{0, 0, tr.interior_length}, {1, 0, 0}, {0, 1, 0}, tr.interior_width,
              tr.interior_height, {0, 0, -1}};
    case SurfaceKind::Cargo: {
      if (surface.index < 0 || surface.index >= static_cast<int>(scene.cargo.size()))
        throw ContractError("cargo surface index out of range");
      const CargoBox& box = scene.cargo[surface.index];
      int axis = 0;
      for (int a = 1; a < 3; a++)
        if (std::abs(normal[a]) > std::abs(normal[axis])) axis = a;
      const double sign = normal[axis] >= 0.0 ? 1.0 : -1.0;
      const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
      Vec3 origin = box.min_corner;
      if (sign > 0.0) origin += axis_vec(axis, box.size[axis]);
      return {origin, axis_vec(ua, 1.0), axis_vec(va, 1.0), box.size[ua], box.size[va],
              axis_vec(axis, sign)};
    }
    case SurfaceKind::Patch: break;
  }
  throw ContractError("a patch quad cannot host another patch");
}

Ray camera_ray_at(const Camera& camera, double sx, double sy) {
  const CameraFrame b = camera_frame(camera);
  const double ndc_x = 2.0 * sx / camera.width - 1.0;
  const double ndc_y = 1.0 - 2.0 * sy / camera.height;
  const Vec3 dir = b.forward + b.right * (ndc_x * b.tan_half * b.aspect) +
                   b.up * (ndc_y * b.tan_half);
  return {camera.position, normalize(dir)};
}

Ray camera_ray(const Camera& camera, int px, int py, const Vec2& jitter) {
  return camera_ray_at(camera, px + jitter.x, py + jitter.y);
}

bool project_point(const Camera& camera, const Vec3& world, Vec2* pixel) {
  const CameraFrame b = camera_frame(camera);
  const Vec3 rel = world - camera.position;
  const double zc = dot(rel, b.forward);
  if (zc <= 1e-12) return false;
  const double xc = dot(rel, b.right), yc = dot(rel, b.up);
  pixel->x = (xc / (zc * b.tan_half * b.aspect) + 1.0) * 0.5 * camera.width;
  pixel->y = (1.0 - yc / (zc * b.tan_half)) * 0.5 * camera.height;
  return true;
}

std::optional<Hit> intersect(const Scene& scene, std::span<const PatchQuad> quads,
                             const Ray& ray) {
  double best_t = 1e300;
  Hit best;
  intersect_shell(scene, ray, best_t, best);
  intersect_boxes(scene, ray, best_t, best);
  intersect_quads(quads, ray, best_t, best);
  if (best_t >= 1e300) return std::nullopt;
  return best;
}

bool occluded(const Scene& scene, std::span<const PatchQuad> quads, const Vec3& from,
              const Vec3& light_position) {
  const Vec3 seg = light_position - from;
  const double dist = length(seg);
  if (dist < kShadowEps) return false;
  const Ray ray{from, seg / dist};
  const auto hit = intersect(scene, quads, ray);
  return hit && hit->t < dist - kShadowEps;
}

Rgb shade_factor(const Scene& scene, std::span<const PatchQuad> quads, const Hit& hit) {
  Rgb factor;
  const Vec3 from = hit.position + hit.normal * kShadowEps;
  for (const PointLight& light : scene.lights) {
    const Vec3 to_light = light.position - hit.position;
    const double d2 = dot(to_light, to_light);
    if (d2 < 1e-12) continue;
    const double cos_term = dot(hit.normal, to_light) / std::sqrt(d2);
    if (cos_term <= 0.0) continue;
    if (occluded(scene, quads, from, light.position)) continue;
    factor += light.intensity * (cos_term / (kPi * d2));
  }
  return factor;
}

Rgb shade_direct(const Scene& scene, std::span<const PatchQuad> quads, const Hit& hit,
                 const Rgb& albedo) {
  return hadamard(albedo, shade_factor(scene, quads, hit));
}

ImageRGB render(const RenderRequest& request) { return render_impl(request, nullptr); }

ImageRGB render_with_tape(const RenderRequest& request, RenderTape* tape) {
  if (!tape) throw ContractError("render_with_tape needs a tape");
  return render_impl(request, tape);
}

PatchTexture tape_backward(const RenderTape& tape, const ImageRGB& grad_image) {
  if (grad_image.width != tape.width || grad_image.height != tape.height)
    throw ContractError("gradient image shape does not match the tape");
  if (tape.patch_height < 1 || tape.patch_width < 1)
    throw ContractError("tape was recorded without a patch");
  PatchTexture grad = PatchTexture::constant(tape.patch_height, tape.patch_width, 0.0);
  for (const TapeEntry& entry : tape.entries) {
    const std::size_t p = static_cast<std::size_t>(entry.pixel) * 3;
    const std::size_t t = static_cast<std::size_t>(entry.texel) * 3;
    const double w[3] = {entry.weight.x, entry.weight.y, entry.weight.z};
    for (int c = 0; c < 3; c++) {
      const double pre = tape.pre_clamp[p + c];
      if (pre >= 0.0 && pre <= 1.0) grad.data[t + c] += grad_image.data[p + c] * w[c];
    }
  }
  return grad;
}

}  // namespace cargopatch
