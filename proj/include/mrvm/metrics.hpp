// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "mrvm/image.hpp"

/// Image-quality metrics and evaluation reports.
namespace mrvm::metrics {

/// Reported in place of +inf when two images are identical.
inline constexpr double kPsnrCap = 99.0;

double psnr_from_mse(double mse);
double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over every full window position on the channel-mean
/// grayscale images.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

struct ViewScore {
  int view = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::string scene_id;
  std::vector<ViewScore> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void finalize();
};

std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_json(const std::vector<EvalReport>& reports);

}  // namespace mrvm::metrics
