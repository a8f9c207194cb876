// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "mrvm/diffcore.hpp"

namespace mrvm {

/// RGB image with values in [0, 1], row-major from the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  /// (H*W x 3) view used by the encoder and feature sampling.
  diff::Tensor as_tensor() const;
};

/// Binary PPM (P6, maxval 255). Values are rounded to the nearest level.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// 8-bit quantization round trip, as images are stored on disk.
double quantize8(double v);

}  // namespace mrvm
