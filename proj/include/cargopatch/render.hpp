#pragma once

// Direct-lighting ray caster over trailer scenes: primary rays + shadow rays,
// Lambertian shading only. Rendering a placed patch also records a sparse
// linear tape from patch texels to pixels, which makes the image exactly
// differentiable with respect to the patch texture (geometry and visibility
// are treated as constants).

#include <optional>
#include <span>
#include <vector>

#include "cargopatch/image.hpp"
#include "cargopatch/math.hpp"
#include "cargopatch/patch.hpp"
#include "cargopatch/scene.hpp"

namespace cargopatch {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

enum class SurfaceKind { Floor, WallLeft, WallRight, WallFront, Ceiling, Cargo, Patch };

struct SurfaceId {
  SurfaceKind kind = SurfaceKind::Floor;
  int index = -1;  // cargo box index, or -1

  bool operator==(const SurfaceId&) const = default;
};

const char* surface_kind_name(SurfaceKind kind);

struct Hit {
  double t = 0.0;
  Vec3 position;
  Vec3 normal;  // unit, facing the ray origin
  SurfaceId surface;
  Vec2 uv;  // patch hits only
};

// A placed patch, ready to intersect. The quad is the anchor rectangle lifted
// a hair off its host surface so nearest-hit resolution is unambiguous.
struct PatchQuad {
  Vec3 origin;   // corner at texture (u,v) = (0,0), already lifted
  Vec3 edge_u;   // full extent along texture u
  Vec3 edge_v;   // full extent along texture v
  Vec3 normal;   // unit, the host surface normal
  SurfaceId host;
};

inline constexpr double kPatchLift = 1e-4;  // meters off the host surface

// An interior face (or cargo face) as a bounded rectangle: point = origin +
// a*axis_u + b*axis_v with a in [0, extent_u], b in [0, extent_v].
struct FaceRect {
  Vec3 origin;
  Vec3 axis_u;  // unit
  Vec3 axis_v;  // unit
  double extent_u = 0.0;
  double extent_v = 0.0;
  Vec3 normal;  // unit, pointing into the interior
};

// The bounded rectangle of a (non-patch) surface. For cargo the face is the
// one whose outward normal matches `normal`.
FaceRect host_face_rect(const Scene& scene, SurfaceId surface, const Vec3& normal);

// Orthonormal view basis plus projection constants; shared by the ray
// generator, the point projector, and the homography builder so all three
// agree exactly.
struct CameraFrame {
  Vec3 right, up, forward;
  double tan_half = 0.0, aspect = 0.0;
};

CameraFrame camera_frame(const Camera& camera);

// Ray through the image-plane point (sx, sy) in continuous pixel coordinates.
Ray camera_ray_at(const Camera& camera, double sx, double sy);

// Ray through pixel (px, py) offset by jitter in [0,1)^2. Jitter (0.5, 0.5)
// is the pixel center.
Ray camera_ray(const Camera& camera, int px, int py, const Vec2& jitter);

// Pinhole projection into continuous pixel coordinates; false when the point
// is not strictly in front of the camera.
bool project_point(const Camera& camera, const Vec3& world, Vec2* pixel);

// Nearest intersection against trailer faces, cargo boxes, and patch quads.
std::optional<Hit> intersect(const Scene& scene, std::span<const PatchQuad> quads,
                             const Ray& ray);

// True when the open segment from `from` toward the light is blocked.
bool occluded(const Scene& scene, std::span<const PatchQuad> quads, const Vec3& from,
              const Vec3& light_position);

// Lambertian direct lighting with shadow rays:
// sum over lights of (albedo/pi) * I * max(0, n.l) / d^2 * V.
Rgb shade_direct(const Scene& scene, std::span<const PatchQuad> quads, const Hit& hit,
                 const Rgb& albedo);

// Scale factor multiplying the albedo at `hit`, i.e. shade_direct == albedo
// (componentwise) * shade_factor. This is the tape weight's shading part.
Rgb shade_factor(const Scene& scene, std::span<const PatchQuad> quads, const Hit& hit);

// One sparse tape entry: pixel += weight (componentwise) * texel.
struct TapeEntry {
  int pixel = 0;   // flat pixel id (y*width + x)
  int texel = 0;   // flat texel id (y*patch_width + x)
  Rgb weight;
};

struct RenderTape {
  int width = 0, height = 0;
  int patch_height = 0, patch_width = 0;
  std::vector<double> pre_clamp;   // width*height*3, pixel values before [0,1] clamp
  std::vector<TapeEntry> entries;  // ascending pixel id
};

struct RenderRequest {
  const Scene* scene = nullptr;
  const PatchTexture* patch = nullptr;     // optional; requires quads
  std::span<const PatchQuad> quads;        // optional placements
  int spp = 4;
  int workers = 1;
};

ImageRGB render(const RenderRequest& request);
ImageRGB render_with_tape(const RenderRequest& request, RenderTape* tape);

// dL/dtexel accumulated from dL/dpixel through the tape; pixels whose
// pre-clamp value left [0,1] contribute nothing (clamp subgradient).
PatchTexture tape_backward(const RenderTape& tape, const ImageRGB& grad_image);

}  // namespace cargopatch
