#include "cargopatch/scene.hpp"

#include <algorithm>
#include <cmath>

#include "cargopatch/error.hpp"

namespace cargopatch {

const char* label_name(OccupancyLabel label) {
  switch (label) {
    case OccupancyLabel::Empty: return "empty";
    case OccupancyLabel::Medium: return "medium";
    case OccupancyLabel::Full: return "full";
  }
  return "?";
}

OccupancyLabel label_from_int(int value) {
  if (value < 0 || value > 2) throw ContractError("occupancy label out of range: " + std::to_string(value));
  return static_cast<OccupancyLabel>(value);
}

OccupancyLabel label_from_name(const std::string& name) {
  if (name == "empty") return OccupancyLabel::Empty;
  if (name == "medium") return OccupancyLabel::Medium;
  if (name == "full") return OccupancyLabel::Full;
  throw ContractError("unknown occupancy label: " + name);
}

CoverageBand coverage_band(OccupancyLabel label) {
  switch (label) {
    case OccupancyLabel::Empty: return {0.0, 0.0};
    case OccupancyLabel::Medium: return {0.25, 0.60};
    case OccupancyLabel::Full: return {0.75, 1.0};
  }
  return {0.0, 0.0};
}

double rect_union_area(std::vector<Rect2> rects) {
  // Coordinate compression over x; per strip, merge z intervals.
  rects.erase(std::remove_if(rects.begin(), rects.end(),
                             [](const Rect2& r) { return r.x1 <= r.x0 || r.z1 <= r.z0; }),
              rects.end());
  if (rects.empty()) return 0.0;
  std::vector<double> xs;
  xs.reserve(rects.size() * 2);
  for (const auto& r : rects) {
    xs.push_back(r.x0);
    xs.push_back(r.x1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double area = 0.0;
  std::vector<std::pair<double, double>> intervals;
  for (std::size_t i = 0; i + 1 < xs.size(); i++) {
    const double x_mid = 0.5 * (xs[i] + xs[i + 1]);
    const double strip_w = xs[i + 1] - xs[i];
    intervals.clear();
    for (const auto& r : rects)
      if (r.x0 <= x_mid && x_mid < r.x1) intervals.emplace_back(r.z0, r.z1);
    if (intervals.empty()) continue;
    std::sort(intervals.begin(), intervals.end());
    double lo = intervals[0].first, hi = intervals[0].second, len = 0.0;
    for (std::size_t k = 1; k < intervals.size(); k++) {
      if (intervals[k].first > hi) {
        len += hi - lo;
        lo = intervals[k].first;
        hi = intervals[k].second;
      } else {
        hi = std::max(hi, intervals[k].second);
      }
    }
    len += hi - lo;
    area += strip_w * len;
  }
  return area;
}

double floor_coverage(const Scene& scene) {
  const double width = scene.trailer.interior_width;
  const double depth = scene.trailer.interior_length;
  if (width <= 0.0 || depth <= 0.0) return 0.0;
  std::vector<Rect2> footprints;
  footprints.reserve(scene.cargo.size());
  for (const auto& box : scene.cargo) {
    // Clip each footprint to the floor rectangle.
    const double x0 = std::max(0.0, box.min_corner.x);
    const double z0 = std::max(0.0, box.min_corner.z);
    const double x1 = std::min(width, box.min_corner.x + box.size.x);
    const double z1 = std::min(depth, box.min_corner.z + box.size.z);
    if (x1 > x0 && z1 > z0) footprints.push_back({x0, z0, x1, z1});
  }
  return rect_union_area(std::move(footprints)) / (width * depth);
}

namespace {

bool rgb_in_unit(const Rgb& c) {
  return c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0 && c.z >= 0.0 && c.z <= 1.0;
}

bool boxes_overlap(const CargoBox& a, const CargoBox& b) {
  const Vec3 a1 = a.max_corner(), b1 = b.max_corner();
  return a.min_corner.x < b1.x && b.min_corner.x < a1.x && a.min_corner.y < b1.y &&
         b.min_corner.y < a1.y && a.min_corner.z < b1.z && b.min_corner.z < a1.z;
}

}  // namespace

std::vector<Violation> validate_scene(const Scene& scene) {
  std::vector<Violation> out;
  const auto& tr = scene.trailer;

  if (tr.interior_length <= 0.0 || tr.interior_width <= 0.0 || tr.interior_height <= 0.0)
    out.push_back({"TRAILER_DIM_NONPOSITIVE", "trailer interior dimensions must be > 0"});
  if (!rgb_in_unit(tr.wall_albedo) || !rgb_in_unit(tr.floor_albedo) || !rgb_in_unit(tr.ceiling_albedo))
    out.push_back({"ALBEDO_RANGE", "trailer albedo outside [0,1]"});

  const double width = tr.interior_width, height = tr.interior_height, depth = tr.interior_length;
  const double tol = 1e-9;
  for (std::size_t i = 0; i < scene.cargo.size(); i++) {
    const auto& box = scene.cargo[i];
    if (box.size.x <= 0.0 || box.size.y <= 0.0 || box.size.z <= 0.0)
      out.push_back({"CARGO_SIZE_NONPOSITIVE", "cargo " + std::to_string(i) + " has nonpositive size"});
    const Vec3 hi = box.max_corner();
    if (box.min_corner.x < -tol || box.min_corner.y < -tol || box.min_corner.z < -tol ||
        hi.x > width + tol || hi.y > height + tol || hi.z > depth + tol)
      out.push_back({"CARGO_OUT_OF_BOUNDS", "cargo " + std::to_string(i) + " escapes the trailer interior"});
    if (!rgb_in_unit(box.albedo))
      out.push_back({"ALBEDO_RANGE", "cargo " + std::to_string(i) + " albedo outside [0,1]"});
    for (std::size_t j = i + 1; j < scene.cargo.size(); j++)
      if (boxes_overlap(box, scene.cargo[j]))
        out.push_back({"CARGO_OVERLAP",
                       "cargo " + std::to_string(i) + " overlaps cargo " + std::to_string(j)});
  }

  if (scene.lights.empty()) out.push_back({"NO_LIGHTS", "scene has no lights"});
  for (std::size_t i = 0; i < scene.lights.size(); i++) {
    const auto& light = scene.lights[i];
    if (light.intensity.x < 0.0 || light.intensity.y < 0.0 || light.intensity.z < 0.0)
      out.push_back({"LIGHT_INTENSITY_NEGATIVE", "light " + std::to_string(i) + " intensity < 0"});
    // inside or above the interior
    if (light.position.x < -tol || light.position.x > width + tol || light.position.z < -tol ||
        light.position.z > depth + tol || light.position.y <= 0.0)
      out.push_back({"LIGHT_POSITION_RANGE", "light " + std::to_string(i) + " outside interior column"});
  }

  const auto& cam = scene.camera;
  if (!(cam.vfov > 0.0 && cam.vfov < 180.0))
    out.push_back({"VFOV_RANGE", "camera vfov must be in (0, 180)"});
  if (cam.width < 16 || cam.height < 16)
    out.push_back({"CAMERA_RESOLUTION", "camera resolution must be at least 16x16"});
  const Vec3 view = cam.look_at - cam.position;
  if (length(view) < 1e-12 || length(cross(view, cam.up)) < 1e-9 * length(view) * length(cam.up))
    out.push_back({"CAMERA_UP_PARALLEL", "camera view direction parallel to up vector"});

  const double coverage = floor_coverage(scene);
  const CoverageBand band = coverage_band(scene.label);
  const bool label_ok = scene.label == OccupancyLabel::Empty
                            ? scene.cargo.empty()
                            : band.contains(coverage);
  if (!label_ok)
    out.push_back({"LABEL_COVERAGE_MISMATCH",
                   std::string("coverage ") + std::to_string(coverage) + " outside the " +
                       label_name(scene.label) + " band"});

  return out;
}

}  // namespace cargopatch
