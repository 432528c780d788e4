#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "cargopatch/error.hpp"
#include "cargopatch/scene.hpp"
#include "cargopatch/scene_gen.hpp"
#include "cargopatch/scene_io.hpp"
#include "test_util.hpp"

using namespace cargopatch;

namespace {

Scene minimal_valid_scene() {
  Scene s;
  s.label = OccupancyLabel::Empty;
  s.seed = 1;
  s.lights.push_back({{1.3, 2.6, 8.0}, {20.0, 20.0, 20.0}});
  s.camera.position = {1.295, 2.57, 0.2};
  s.camera.look_at = {1.295, 0.6, 8.075};
  return s;
}

// Independent coverage oracle: sum of clipped footprints, valid only when the
// footprints are known to be disjoint.
double disjoint_coverage(const Scene& s) {
  const double w = s.trailer.interior_width, l = s.trailer.interior_length;
  double total = 0.0;
  for (const auto& b : s.cargo) {
    const double x0 = std::max(0.0, b.min_corner.x), x1 = std::min(w, b.min_corner.x + b.size.x);
    const double z0 = std::max(0.0, b.min_corner.z), z1 = std::min(l, b.min_corner.z + b.size.z);
    if (x1 > x0 && z1 > z0) total += (x1 - x0) * (z1 - z0);
  }
  return total / (w * l);
}

bool has_code(const std::vector<Violation>& v, const std::string& code) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == code; });
}

}  // namespace

TEST_CASE("labels: names, ints, bands") {
  CHECK(label_name(OccupancyLabel::Empty) == std::string("empty"));
  CHECK(label_name(OccupancyLabel::Medium) == std::string("medium"));
  CHECK(label_name(OccupancyLabel::Full) == std::string("full"));
  CHECK(label_from_name("medium") == OccupancyLabel::Medium);
  CHECK(label_from_int(2) == OccupancyLabel::Full);
  CHECK_THROWS_AS(label_from_int(3), ContractError);
  CHECK_THROWS_AS(label_from_name("half"), ContractError);

  CHECK(coverage_band(OccupancyLabel::Empty).contains(0.0));
  CHECK_FALSE(coverage_band(OccupancyLabel::Empty).contains(0.01));
  CHECK(coverage_band(OccupancyLabel::Medium).contains(0.25));
  CHECK(coverage_band(OccupancyLabel::Medium).contains(0.60));
  CHECK_FALSE(coverage_band(OccupancyLabel::Medium).contains(0.61));
  CHECK(coverage_band(OccupancyLabel::Full).contains(0.75));
  CHECK_FALSE(coverage_band(OccupancyLabel::Full).contains(0.74));

  // Bands are pairwise disjoint.
  const CoverageBand bands[] = {coverage_band(OccupancyLabel::Empty),
                                coverage_band(OccupancyLabel::Medium),
                                coverage_band(OccupancyLabel::Full)};
  for (int i = 0; i < 3; i++)
    for (int j = i + 1; j < 3; j++) CHECK(bands[i].hi < bands[j].lo);
}

TEST_CASE("rect union area against hand-computed values") {
  CHECK(rect_union_area({}) == 0.0);
  CHECK(rect_union_area({{0, 0, 2, 3}}) == doctest::Approx(6.0).epsilon(1e-12));
  // Disjoint.
  CHECK(rect_union_area({{0, 0, 1, 1}, {5, 5, 6, 6}}) == doctest::Approx(2.0).epsilon(1e-12));
  // Half-overlapping unit squares: 1 + 1 - 0.25 = 1.75.
  CHECK(rect_union_area({{0, 0, 1, 1}, {0.5, 0.5, 1.5, 1.5}}) ==
        doctest::Approx(1.75).epsilon(1e-12));
  // Nested.
  CHECK(rect_union_area({{0, 0, 4, 4}, {1, 1, 2, 2}}) == doctest::Approx(16.0).epsilon(1e-12));
  // Duplicate.
  CHECK(rect_union_area({{0, 0, 1, 2}, {0, 0, 1, 2}}) == doctest::Approx(2.0).epsilon(1e-12));
  // Cross shape: two 1x3 strips crossing in a unit cell: 3 + 3 - 1 = 5.
  CHECK(rect_union_area({{1, 0, 2, 3}, {0, 1, 3, 2}}) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("floor coverage of known layouts") {
  Scene s = minimal_valid_scene();
  CHECK(floor_coverage(s) == 0.0);

  // Two disjoint 1x1 footprints on the default 16.15 x 2.59 floor.
  s.cargo.push_back({{0.2, 0.0, 2.0}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
  s.cargo.push_back({{1.4, 0.0, 4.0}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
  CHECK(floor_coverage(s) == doctest::Approx(0.04781428930035742).epsilon(1e-12));

  // Overlapping footprints count once: union 1.75.
  Scene t = minimal_valid_scene();
  t.cargo.push_back({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
  t.cargo.push_back({{0.5, 0.2, 0.5}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
  CHECK(floor_coverage(t) == doctest::Approx(0.041837503137812745).epsilon(1e-12));

  // Footprints clip to the floor rectangle.
  Scene u = minimal_valid_scene();
  u.cargo.push_back({{-0.5, 0.0, -0.5}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
  CHECK(floor_coverage(u) ==
        doctest::Approx(0.25 / 41.82849999999999).epsilon(1e-12));
}

TEST_CASE("validate_scene flags constructed violations") {
  Scene s = minimal_valid_scene();
  CHECK(validate_scene(s).empty());

  SUBCASE("cargo escaping a wall") {
    s.cargo.push_back({{2.0, 0.0, 3.0}, {1.5, 1.0, 1.0}, {0.4, 0.4, 0.4}});
    s.label = OccupancyLabel::Medium;
    CHECK(has_code(validate_scene(s), "CARGO_OUT_OF_BOUNDS"));
  }
  SUBCASE("no lights") {
    s.lights.clear();
    CHECK(has_code(validate_scene(s), "NO_LIGHTS"));
  }
  SUBCASE("overlapping cargo") {
    s.cargo.push_back({{0.5, 0.0, 3.0}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
    s.cargo.push_back({{1.0, 0.0, 3.5}, {1.0, 1.0, 1.0}, {0.4, 0.4, 0.4}});
    CHECK(has_code(validate_scene(s), "CARGO_OVERLAP"));
  }
  SUBCASE("vfov out of range") {
    s.camera.vfov = 200.0;
    CHECK(has_code(validate_scene(s), "VFOV_RANGE"));
  }
  SUBCASE("label mismatch") {
    s.label = OccupancyLabel::Full;  // empty floor
    CHECK(has_code(validate_scene(s), "LABEL_COVERAGE_MISMATCH"));
  }
  SUBCASE("up parallel to view") {
    s.camera.position = {1.3, 0.5, 8.0};
    s.camera.look_at = {1.3, 2.5, 8.0};
    CHECK(has_code(validate_scene(s), "CAMERA_UP_PARALLEL"));
  }
}

TEST_CASE("generate_scene honors label semantics") {
  const GenParams params;
  const Scene empty = generate_scene(OccupancyLabel::Empty, params, 7);
  CHECK(empty.cargo.empty());
  CHECK(floor_coverage(empty) == 0.0);

  const Scene full = generate_scene(OccupancyLabel::Full, params, 3);
  CHECK(disjoint_coverage(full) >= 0.75);
  CHECK(floor_coverage(full) == doctest::Approx(disjoint_coverage(full)).epsilon(1e-12));

  const Scene medium = generate_scene(OccupancyLabel::Medium, params, 3);
  const double f = disjoint_coverage(medium);
  CHECK(f >= 0.25);
  CHECK(f <= 0.60);

  // Determinism: identical inputs give identical serializations.
  const Scene again = generate_scene(OccupancyLabel::Medium, params, 3);
  CHECK(scene_to_json(medium) == scene_to_json(again));
}

TEST_CASE("generated scenes self-validate across 1000 seeds per label") {
  const GenParams params;
  const OccupancyLabel labels[] = {OccupancyLabel::Empty, OccupancyLabel::Medium,
                                   OccupancyLabel::Full};
  int bad = 0;
  for (OccupancyLabel label : labels)
    for (std::uint64_t seed = 0; seed < 1000; seed++) {
      const Scene s = generate_scene(label, params, seed);
      if (!validate_scene(s).empty()) bad++;
      const double f = floor_coverage(s);
      int matching = 0;
      for (OccupancyLabel other : labels) {
        const bool m = other == OccupancyLabel::Empty ? s.cargo.empty() && f == 0.0
                                                      : coverage_band(other).contains(f);
        if (m) matching++;
      }
      if (matching != 1) bad++;
    }
  CHECK(bad == 0);
}

TEST_CASE("scene json round-trip is identity") {
  const Scene s = generate_scene(OccupancyLabel::Medium, GenParams{}, 42);
  const Scene r = scene_from_json(scene_to_json(s));
  CHECK(r.trailer.interior_length == s.trailer.interior_length);
  CHECK(r.trailer.wall_albedo == s.trailer.wall_albedo);
  CHECK(r.trailer.floor_albedo == s.trailer.floor_albedo);
  CHECK(r.trailer.ceiling_albedo == s.trailer.ceiling_albedo);
  REQUIRE(r.cargo.size() == s.cargo.size());
  for (std::size_t i = 0; i < s.cargo.size(); i++) {
    CHECK(r.cargo[i].min_corner == s.cargo[i].min_corner);
    CHECK(r.cargo[i].size == s.cargo[i].size);
    CHECK(r.cargo[i].albedo == s.cargo[i].albedo);
  }
  REQUIRE(r.lights.size() == s.lights.size());
  for (std::size_t i = 0; i < s.lights.size(); i++) {
    CHECK(r.lights[i].position == s.lights[i].position);
    CHECK(r.lights[i].intensity == s.lights[i].intensity);
  }
  CHECK(r.camera.position == s.camera.position);
  CHECK(r.camera.look_at == s.camera.look_at);
  CHECK(r.camera.up == s.camera.up);
  CHECK(r.camera.vfov == s.camera.vfov);
  CHECK(r.camera.width == s.camera.width);
  CHECK(r.camera.height == s.camera.height);
  CHECK(r.label == s.label);
  CHECK(r.seed == s.seed);

  // And a second trip through text is byte-stable.
  CHECK(scene_to_json(r) == scene_to_json(s));
}

TEST_CASE("scene json errors") {
  const Scene s = generate_scene(OccupancyLabel::Empty, GenParams{}, 1);
  std::string text = scene_to_json(s);

  SUBCASE("missing camera") {
    auto pos = text.find("\"camera\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 8, "\"kamera\"");
    try {
      scene_from_json(text);
      FAIL("expected parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("camera") != std::string::npos);
    }
  }
  SUBCASE("vfov out of range is a validation error") {
    auto pos = text.find("\"vfov\": 60.0");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"vfov\": 200.0");
    try {
      scene_from_json(text);
      FAIL("expected validation error");
    } catch (const ValidationError& e) {
      CHECK(e.code == "VFOV_RANGE");
    }
  }
  SUBCASE("not json at all") { CHECK_THROWS_AS(scene_from_json("not json"), ParseError); }
}

TEST_CASE("dataset presets carry the expected counts") {
  const DatasetConfig table = table1_config(11);
  CHECK(table.counts[0][0] == 1383);
  CHECK(table.counts[0][1] == 2215);
  CHECK(table.counts[0][2] == 1129);
  CHECK(table.counts[1][0] == 346);
  CHECK(table.counts[1][1] == 554);
  CHECK(table.counts[1][2] == 283);

  const DatasetConfig desk = desk_config(11);
  CHECK(desk.counts[0][0] == 69);
  CHECK(desk.counts[0][1] == 110);
  CHECK(desk.counts[0][2] == 56);
  CHECK(desk.counts[1][0] == 17);
  CHECK(desk.counts[1][1] == 27);
  CHECK(desk.counts[1][2] == 14);

  // Desk split ratios stay within 1% of the full-size ratios.
  for (int c = 0; c < kNumClasses; c++) {
    const double full_ratio =
        double(table.counts[0][c]) / (table.counts[0][c] + table.counts[1][c]);
    const double desk_ratio =
        double(desk.counts[0][c]) / (desk.counts[0][c] + desk.counts[1][c]);
    CHECK(std::abs(full_ratio - desk_ratio) < 0.01);
  }
}

TEST_CASE("generate_dataset writes files, manifest, and is deterministic") {
  DatasetConfig config;
  config.counts = {{{2, 2, 2}, {1, 1, 1}}};
  config.master_seed = 5;

  testutil::TempDir a, b;
  const DatasetManifest ma = generate_dataset(config, a.path, 1);
  CHECK(ma.entries.size() == 9);
  CHECK(ma.count(Split::train, OccupancyLabel::Medium) == 2);
  CHECK(ma.count(Split::test, OccupancyLabel::Full) == 1);
  for (const auto& entry : ma.entries) {
    const Scene s = load_scene(a.path / entry.path);
    CHECK(s.label == entry.label);
    CHECK(validate_scene(s).empty());
  }

  const DatasetManifest mb = generate_dataset(config, b.path, 1);
  CHECK(testutil::slurp(a.path / "manifest.json") == testutil::slurp(b.path / "manifest.json"));
  for (const auto& entry : ma.entries)
    CHECK(testutil::slurp(a.path / entry.path) == testutil::slurp(b.path / entry.path));

  // Round-trip of the manifest itself.
  const DatasetManifest loaded = load_manifest(a.path / "manifest.json");
  CHECK(loaded.seed == ma.seed);
  CHECK(loaded.config_hash == ma.config_hash);
  REQUIRE(loaded.entries.size() == ma.entries.size());
  for (std::size_t i = 0; i < ma.entries.size(); i++) {
    CHECK(loaded.entries[i].path == ma.entries[i].path);
    CHECK(loaded.entries[i].label == ma.entries[i].label);
    CHECK(loaded.entries[i].split == ma.entries[i].split);
  }
}

TEST_CASE("degenerate split: all train") {
  DatasetConfig config;
  config.counts = {{{1, 1, 1}, {0, 0, 0}}};
  config.master_seed = 2;
  testutil::TempDir dir;
  const DatasetManifest m = generate_dataset(config, dir.path, 1);
  CHECK(m.entries.size() == 3);
  for (const auto& entry : m.entries) CHECK(entry.split == Split::train);
}
