// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrvm/error.hpp"

namespace mrvm::sampler {

std::vector<double> DepthSamples::deltas() const {
  std::vector<double> d(t.size());
  for (std::size_t k = 0; k + 1 < t.size(); ++k) d[k] = t[k + 1] - t[k];
  if (!t.empty()) d.back() = t_far - t.back();
  return d;
}

std::vector<std::size_t> DepthSamples::coarse_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < is_coarse.size(); ++k)
    if (is_coarse[k]) out.push_back(k);
  return out;
}

DepthSamples stratified(double t_near, double t_far, std::size_t n, Rng* rng, bool jitter) {
  if (n == 0) throw InvalidArgument("stratified: need at least one sample");
  if (!(t_near < t_far)) throw InvalidArgument("stratified: empty depth range");
  if (jitter && rng == nullptr) throw InvalidArgument("stratified: jitter requires an rng");
  DepthSamples s;
  s.t_near = t_near;
  s.t_far = t_far;
  s.t.resize(n);
  s.is_coarse.assign(n, 1);
  const double width = (t_far - t_near) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = jitter ? uniform01(*rng) : 0.5;
    s.t[i] = t_near + (static_cast<double>(i) + u) * width;
  }
  return s;
}

DepthSamples stratified(const geometry::Ray& ray, std::size_t n, Rng* rng, bool jitter) {
  return stratified(ray.t_near, ray.t_far, n, rng, jitter);
}

std::vector<double> importance(const DepthSamples& coarse, std::span<const double> weights, std::size_t n_extra,
                               Rng& rng) {
  const std::size_t n = weights.size();
  if (n == 0 || n != coarse.size())
    throw InvalidArgument("importance: need one weight per coarse sample");
  if (!(coarse.t_near < coarse.t_far)) throw InvalidArgument("importance: empty depth range");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw NumericError("importance: non-finite weight");
    if (w < 0.0) throw InvalidArgument("importance: weights must be >= 0");
    total += w;
  }
  const double floor = total <= kWeightFloor ? kWeightFloor : 0.0;
  std::vector<double> cdf(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + weights[i] + floor;
  const double mass = cdf[n];
  for (double& c : cdf) c /= mass;
  cdf[n] = 1.0;

  const double width = (coarse.t_far - coarse.t_near) / static_cast<double>(n);
  std::vector<double> out(n_extra);
  for (double& t : out) {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
    std::size_t bin = static_cast<std::size_t>(it - cdf.begin()) - 1;
    while (bin + 1 < n && !(cdf[bin + 1] > cdf[bin])) ++bin;
    const double span = cdf[bin + 1] - cdf[bin];
    const double frac = span > 0.0 ? std::clamp((u - cdf[bin]) / span, 0.0, 1.0) : 0.5;
    t = coarse.t_near + (static_cast<double>(bin) + frac) * width;
    t = std::clamp(t, coarse.t_near, coarse.t_far);
  }
  return out;
}

DepthSamples merge(const DepthSamples& coarse, std::span<const double> extra) {
  DepthSamples out;
  out.t_near = coarse.t_near;
  out.t_far = coarse.t_far;
  if (extra.empty()) return coarse;
  std::vector<std::pair<double, std::uint8_t>> all;
  all.reserve(coarse.size() + extra.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) all.emplace_back(coarse.t[i], coarse.is_coarse[i]);
  std::vector<double> taken(coarse.t.begin(), coarse.t.end());
  std::sort(taken.begin(), taken.end());
  for (double t : extra) {
    if (!(t >= coarse.t_near && t <= coarse.t_far)) throw InvalidArgument("merge: depth outside the ray range");
    const double nudge = t + kDuplicateNudge <= coarse.t_far ? kDuplicateNudge : -kDuplicateNudge;
    auto hit = std::lower_bound(taken.begin(), taken.end(), t);
    while (hit != taken.end() && *hit == t) {
      t += nudge;
      hit = std::lower_bound(taken.begin(), taken.end(), t);
    }
    taken.insert(hit, t);
    all.emplace_back(t, 0);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  out.t.reserve(all.size());
  out.is_coarse.reserve(all.size());
  for (const auto& [t, c] : all) {
    out.t.push_back(t);
    out.is_coarse.push_back(c);
  }
  return out;
}

}  // namespace mrvm::sampler
