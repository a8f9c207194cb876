// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include "doctest.h"
#include "mrvm/metrics.hpp"
#include "mrvm/rng.hpp"

using namespace mrvm;
using namespace mrvm::metrics;

namespace {

Image checkerboard(int size, int cell) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x / cell + y / cell) % 2) ? 0.9 : 0.1;
  return img;
}

}  // namespace

TEST_CASE("psnr anchors") {
  const Image a(16, 16, 0.3);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(Image(4, 4, 0.0), Image(4, 4, 1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0).epsilon(1e-14));
  Image b(16, 16, 0.4);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, Image(8, 16, 0.3)), InvalidArgument);
}

TEST_CASE("psnr falls as noise grows") {
  const Image base = checkerboard(32, 4);
  double last = kPsnrCap + 1.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Rng rng(1);
    Image noisy = base;
    for (double& v : noisy.rgb) v += amp * (2.0 * uniform01(rng) - 1.0);
    const double p = psnr(base, noisy);
    CHECK(p < last);
    CHECK(p == doctest::Approx(psnr(noisy, base)).epsilon(1e-15));
    last = p;
  }
}

TEST_CASE("ssim anchors") {
  const Image board = checkerboard(24, 3);
  CHECK(ssim(board, board) == doctest::Approx(1.0).epsilon(1e-12));
  Image flipped = board;
  for (double& v : flipped.rgb) v = 1.0 - v;
  CHECK(ssim(board, flipped) < 0.0);

  const double c1 = 0.01 * 0.01, a = 0.2, b = 0.7;
  const double lum = (2 * a * b + c1) / (a * a + b * b + c1);
  const double s = ssim(Image(16, 16, a), Image(16, 16, b));
  CHECK(s == doctest::Approx(lum).epsilon(1e-12));
  CHECK(s < 1.0);

  Rng rng(4);
  Image x(20, 20), y(20, 20);
  for (double& v : x.rgb) v = uniform01(rng);
  for (double& v : y.rgb) v = uniform01(rng);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim(Image(10, 10, 0.5), Image(10, 10, 0.5)), InvalidArgument);
}

TEST_CASE("evaluation reports") {
  EvalReport r;
  r.scene_id = "s0";
  r.views = {{3, 20.0, 0.5}, {7, 30.0, 0.7}};
  r.finalize();
  CHECK(r.mean_psnr == 25.0);
  CHECK(r.mean_ssim == doctest::Approx(0.6).epsilon(1e-15));
  const std::string csv = report_csv({r});
  CHECK(csv.rfind("scene_id,view,psnr,ssim\n", 0) == 0);
  CHECK(csv.find("s0,3,20,0.5") != std::string::npos);
  CHECK(csv.find("s0,mean,25,") != std::string::npos);
  CHECK(report_json({r}).find("\"mean_psnr\": 25.0") != std::string::npos);
}
