#include "cargopatch/patch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cargopatch/binio.hpp"
#include "cargopatch/error.hpp"
#include "cargopatch/image.hpp"

namespace cargopatch {

PatchTexture PatchTexture::constant(int height, int width, double value) {
  if (height < 1 || width < 1) throw ContractError("patch dimensions must be positive");
  PatchTexture p;
  p.height = height;
  p.width = width;
  p.data.assign(static_cast<std::size_t>(height) * width * 3, value);
  return p;
}

std::array<BilinearTap, 4> bilinear_taps(int height, int width, double u, double v) {
  const double x = u * width - 0.5;
  const double y = v * height - 0.5;
  const double fx = x - std::floor(x);
  const double fy = y - std::floor(y);
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  return {{{y0 * width + x0, (1.0 - fx) * (1.0 - fy)},
           {y0 * width + x1, fx * (1.0 - fy)},
           {y1 * width + x0, (1.0 - fx) * fy},
           {y1 * width + x1, fx * fy}}};
}

Rgb sample_bilinear(const PatchTexture& patch, double u, double v) {
  Rgb out;
  for (const BilinearTap& tap : bilinear_taps(patch.height, patch.width, u, v)) {
    const std::size_t i = static_cast<std::size_t>(tap.texel) * 3;
    out += Rgb{patch.data[i], patch.data[i + 1], patch.data[i + 2]} * tap.weight;
  }
  return out;
}

void project_patch(PatchTexture& patch) {
  for (double& v : patch.data) v = clamp01(v);
}

void quantize_f32(PatchTexture& patch) {
  for (double& v : patch.data) v = static_cast<double>(static_cast<float>(v));
}

void save_patch(const PatchTexture& patch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write("CPP1", 4);
  write_u32le(out, static_cast<std::uint32_t>(patch.height));
  write_u32le(out, static_cast<std::uint32_t>(patch.width));
  for (double v : patch.data) write_f32le(out, static_cast<float>(v));
  if (!out) throw IoError("write failed: " + path.string());
}

PatchTexture load_patch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  expect_magic(in, "CPP1", path.string());
  const std::uint32_t h = read_u32le(in, path.string());
  const std::uint32_t w = read_u32le(in, path.string());
  if (h < 1 || w < 1 || h > 1u << 16 || w > 1u << 16)
    throw ParseError(path.string(), "implausible patch dimensions in " + path.string());
  PatchTexture p;
  p.height = static_cast<int>(h);
  p.width = static_cast<int>(w);
  p.data.resize(static_cast<std::size_t>(h) * w * 3);
  for (double& v : p.data) v = static_cast<double>(read_f32le(in, path.string()));
  return p;
}

void save_patch_preview(const PatchTexture& patch, const std::filesystem::path& path) {
  ImageRGB img = ImageRGB::zeros(patch.width, patch.height);
  for (int y = 0; y < patch.height; y++)
    for (int x = 0; x < patch.width; x++) img.set_pixel(x, y, clamp01(patch.texel(y, x)));
  save_ppm(img, path);
}

}  // namespace cargopatch
