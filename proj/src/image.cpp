#include "cargopatch/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cargopatch/error.hpp"

namespace cargopatch {

void save_ppm(const ImageRGB& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; y++) {
    for (int x = 0; x < image.width; x++) {
      for (int c = 0; c < 3; c++) {
        const double v = clamp01(image.at(x, y, c));
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(255.0 * v));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ImageRGB load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw ParseError("magic", "not a P6 ppm: " + path.string());
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width <= 0 || height <= 0 || maxval != 255)
    throw ParseError("header", "bad ppm header: " + path.string());
  in.get();  // single whitespace after maxval
  ImageRGB img = ImageRGB::zeros(width, height);
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw ParseError("pixels", "truncated ppm: " + path.string());
  for (std::size_t i = 0; i < raw.size(); i++) img.data[i] = raw[i] / 255.0;
  return img;
}

}  // namespace cargopatch
