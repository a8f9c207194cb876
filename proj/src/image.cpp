// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "mrvm/error.hpp"

namespace mrvm {

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Skips whitespace and '#' comments between header tokens.
void skip_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

diff::Tensor Image::as_tensor() const { return diff::Tensor(pixel_count(), 3, rgb); }

double quantize8(double v) { return to_byte(v) / 255.0; }

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), bytes.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError("'" + path.string() + "' is not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  skip_space(in);
  in >> w;
  skip_space(in);
  in >> h;
  skip_space(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255)
    throw DataError("'" + path.string() + "': unsupported PPM header");
  in.get();
  Image image(w, h);
  std::vector<unsigned char> bytes(image.rgb.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError("'" + path.string() + "': truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i) image.rgb[i] = bytes[i] / 255.0;
  return image;
}

}  // namespace mrvm
