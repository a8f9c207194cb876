// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/metrics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json_util.hpp"

namespace mrvm::metrics {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw InvalidArgument(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  if (a.rgb.empty()) throw InvalidArgument(std::string(what) + ": empty images");
}

std::vector<double> gray(const Image& img) {
  std::vector<double> g(img.pixel_count());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (img.rgb[i * 3] + img.rgb[i * 3 + 1] + img.rgb[i * 3 + 2]) / 3.0;
  return g;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double capped(double v) { return std::isfinite(v) ? std::min(v, kPsnrCap) : kPsnrCap; }

}  // namespace

double psnr_from_mse(double mse) {
  if (!(mse >= 0.0)) throw NumericError("psnr: invalid mean squared error");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double mse(const Image& a, const Image& b) {
  check_same(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    s += d * d;
  }
  return s / static_cast<double>(a.rgb.size());
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const Image& a, const Image& b, const SsimOptions& o) {
  check_same(a, b, "ssim");
  if (o.window <= 0 || a.width < o.window || a.height < o.window)
    throw InvalidArgument("ssim: images are smaller than the " + std::to_string(o.window) + "x" +
                          std::to_string(o.window) + " window");
  std::vector<double> kernel(static_cast<std::size_t>(o.window));
  double ksum = 0.0;
  const double half = (o.window - 1) / 2.0;
  for (int i = 0; i < o.window; ++i) {
    kernel[static_cast<std::size_t>(i)] = std::exp(-(i - half) * (i - half) / (2.0 * o.sigma * o.sigma));
    ksum += kernel[static_cast<std::size_t>(i)];
  }
  for (double& k : kernel) k /= ksum;
  const auto ga = gray(a), gb = gray(b);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const int w = a.width;
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + o.window <= a.height; ++y0) {
    for (int x0 = 0; x0 + o.window <= w; ++x0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dy = 0; dy < o.window; ++dy) {
        for (int dx = 0; dx < o.window; ++dx) {
          const double k = kernel[static_cast<std::size_t>(dy)] * kernel[static_cast<std::size_t>(dx)];
          const std::size_t idx = static_cast<std::size_t>(y0 + dy) * static_cast<std::size_t>(w) +
                                  static_cast<std::size_t>(x0 + dx);
          const double x = ga[idx], yv = gb[idx];
          mx += k * x;
          my += k * yv;
          sxx += k * x * x;
          syy += k * yv * yv;
          sxy += k * x * yv;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

void EvalReport::finalize() {
  mean_psnr = mean_ssim = 0.0;
  if (views.empty()) return;
  for (const auto& v : views) {
    mean_psnr += capped(v.psnr);
    mean_ssim += v.ssim;
  }
  mean_psnr /= static_cast<double>(views.size());
  mean_ssim /= static_cast<double>(views.size());
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "scene_id,view,psnr,ssim\n";
  for (const auto& r : reports) {
    for (const auto& v : r.views) os << r.scene_id << ',' << v.view << ',' << fmt(capped(v.psnr)) << ',' << fmt(v.ssim) << '\n';
    os << r.scene_id << ",mean," << fmt(r.mean_psnr) << ',' << fmt(r.mean_ssim) << '\n';
  }
  return os.str();
}

std::string report_json(const std::vector<EvalReport>& reports) {
  detail::json arr = detail::json::array();
  for (const auto& r : reports) {
    detail::json views = detail::json::array();
    for (const auto& v : r.views) views.push_back({{"view", v.view}, {"psnr", capped(v.psnr)}, {"ssim", v.ssim}});
    arr.push_back({{"scene_id", r.scene_id}, {"views", views}, {"mean_psnr", r.mean_psnr}, {"mean_ssim", r.mean_ssim}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace mrvm::metrics
