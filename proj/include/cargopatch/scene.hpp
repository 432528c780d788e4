#pragma once

// Trailer scene description: geometry, lighting, camera and the occupancy
// label. The scene frame is right-handed with the floor at y=0 and the
// (open) door at z=0; +z runs toward the trailer nose.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cargopatch/math.hpp"

namespace cargopatch {

enum class OccupancyLabel : int { Empty = 0, Medium = 1, Full = 2 };

constexpr int kNumClasses = 3;

const char* label_name(OccupancyLabel label);           // "empty" / "medium" / "full"
OccupancyLabel label_from_int(int value);               // throws ContractError out of range
OccupancyLabel label_from_name(const std::string& name);

struct TrailerSpec {
  // Defaults approximate a 53-foot trailer interior.
  double interior_length = 16.15;  // meters, along z
  double interior_width = 2.59;    // meters, along x
  double interior_height = 2.77;   // meters, along y
  Rgb wall_albedo{0.62, 0.63, 0.65};
  Rgb floor_albedo{0.35, 0.33, 0.30};
  Rgb ceiling_albedo{0.74, 0.74, 0.72};
};

// Axis-aligned box resting in the trailer-local frame.
struct CargoBox {
  Vec3 min_corner;
  Vec3 size;
  Rgb albedo{0.45, 0.33, 0.22};

  Vec3 max_corner() const { return min_corner + size; }
};

struct PointLight {
  Vec3 position;
  Rgb intensity;  // radiant intensity per channel, W/sr scale
};

struct Camera {
  Vec3 position;
  Vec3 look_at;
  Vec3 up{0.0, 1.0, 0.0};
  double vfov = 60.0;  // vertical field of view, degrees
  int width = 96;
  int height = 96;
};

struct Scene {
  TrailerSpec trailer;
  std::vector<CargoBox> cargo;
  std::vector<PointLight> lights;
  Camera camera;
  OccupancyLabel label = OccupancyLabel::Empty;
  std::uint64_t seed = 0;
};

// --- occupancy semantics -------------------------------------------------

// Fraction of the floor rectangle covered by the union of cargo footprints.
double floor_coverage(const Scene& scene);

struct CoverageBand {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double f) const { return f >= lo && f <= hi; }
};

// Empty: exactly 0. Medium: [0.25, 0.60]. Full: [0.75, 1]. The gaps keep the
// classes cleanly separable.
CoverageBand coverage_band(OccupancyLabel label);

// Exact union area of axis-aligned rectangles {x0,z0,x1,z1}, used by the
// coverage computation and by tests as an independent oracle.
struct Rect2 {
  double x0, z0, x1, z1;
};
double rect_union_area(std::vector<Rect2> rects);

// --- validation -----------------------------------------------------------

struct Violation {
  std::string code;     // stable identifier, e.g. "CARGO_OUT_OF_BOUNDS"
  std::string message;  // human-readable detail
};

// Checks every Scene invariant; returns all violations found (empty = valid).
// Never throws.
std::vector<Violation> validate_scene(const Scene& scene);

}  // namespace cargopatch
