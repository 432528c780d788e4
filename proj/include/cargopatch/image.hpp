#pragma once

#include <filesystem>
#include <vector>

#include "cargopatch/math.hpp"

namespace cargopatch {

// Row-major linear-RGB image. Values are expected in [0,1] after tone
// mapping; gradients reuse the same container with unbounded values.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width*height*3

  static ImageRGB zeros(int width, int height) {
    ImageRGB img;
    img.width = width;
    img.height = height;
    img.data.assign(static_cast<std::size_t>(width) * height * 3, 0.0);
    return img;
  }

  std::size_t pixel_index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }

  double& at(int x, int y, int c) { return data[pixel_index(x, y) + c]; }
  double at(int x, int y, int c) const { return data[pixel_index(x, y) + c]; }

  Rgb pixel(int x, int y) const {
    const std::size_t i = pixel_index(x, y);
    return {data[i], data[i + 1], data[i + 2]};
  }

  void set_pixel(int x, int y, const Rgb& v) {
    const std::size_t i = pixel_index(x, y);
    data[i] = v.x;
    data[i + 1] = v.y;
    data[i + 2] = v.z;
  }
};

// Binary PPM (P6, maxval 255); linear values quantized by round(255*v).
void save_ppm(const ImageRGB& image, const std::filesystem::path& path);
ImageRGB load_ppm(const std::filesystem::path& path);

}  // namespace cargopatch
