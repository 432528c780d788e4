#pragma once

// The learnable patch texture and its disk format. Values live in [0,1]
// (projection re-establishes this after every optimizer step) and are kept
// float32-representable so the binary format round-trips bit-exactly.

#include <array>
#include <filesystem>
#include <vector>

#include "cargopatch/math.hpp"

namespace cargopatch {

struct PatchTexture {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height*width*3, row-major

  static PatchTexture constant(int height, int width, double value);

  std::size_t texel_index(int y, int x) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }
  double& at(int y, int x, int c) { return data[texel_index(y, x) + c]; }
  double at(int y, int x, int c) const { return data[texel_index(y, x) + c]; }

  Rgb texel(int y, int x) const {
    const std::size_t i = texel_index(y, x);
    return {data[i], data[i + 1], data[i + 2]};
  }
};

// One corner of the bilinear footprint: flat texel id (y*width + x) + weight.
struct BilinearTap {
  int texel = 0;
  double weight = 0.0;
};

// Clamp-to-edge bilinear taps for texture coordinates (u,v) in [0,1]^2.
// u runs along width, v along height; texel centers sit at (i+0.5)/extent.
std::array<BilinearTap, 4> bilinear_taps(int height, int width, double u, double v);

Rgb sample_bilinear(const PatchTexture& patch, double u, double v);

// Elementwise clamp to [0,1]. Idempotent.
void project_patch(PatchTexture& patch);

// Round every value to the nearest float32-representable double, so that the
// float32 file format is lossless for this texture.
void quantize_f32(PatchTexture& patch);

void save_patch(const PatchTexture& patch, const std::filesystem::path& path);
PatchTexture load_patch(const std::filesystem::path& path);

// 8-bit PPM preview with the texture's own dimensions.
void save_patch_preview(const PatchTexture& patch, const std::filesystem::path& path);

}  // namespace cargopatch
