// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mrvm/sampler.hpp"
#include "stats.hpp"

using namespace mrvm;
using namespace mrvm::sampler;

TEST_CASE("stratified midpoints and jittered bins") {
  const DepthSamples mid = stratified(0.0, 1.0, 2, nullptr, false);
  REQUIRE(mid.size() == 2);
  CHECK(mid.t[0] == 0.25);
  CHECK(mid.t[1] == 0.75);
  CHECK(std::all_of(mid.is_coarse.begin(), mid.is_coarse.end(), [](auto c) { return c == 1; }));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const DepthSamples s = stratified(2.0, 6.0, 64, &rng, true);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s.t[i] >= 2.0 + i * 4.0 / 64);
      CHECK(s.t[i] <= 2.0 + (i + 1) * 4.0 / 64);
      if (i > 0) CHECK(s.t[i] > s.t[i - 1]);
    }
    const auto d = s.deltas();
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    CHECK(std::abs(total - (6.0 - s.t[0])) < 1e-12);
    CHECK(d.back() == 6.0 - s.t.back());
  }
  CHECK_THROWS_AS(stratified(0.0, 1.0, 0, nullptr, false), InvalidArgument);
  CHECK_THROWS_AS(stratified(0.0, 1.0, 4, nullptr, true), InvalidArgument);
}

TEST_CASE("importance sampling of a delta lands in its bin") {
  Rng rng(1);
  const DepthSamples coarse = stratified(1.0, 3.0, 64, nullptr, false);
  for (std::size_t k : {0u, 17u, 63u}) {
    std::vector<double> w(64, 0.0);
    w[k] = 1.0;
    const auto extra = importance(coarse, w, 1000, rng);
    const double lo = 1.0 + k * 2.0 / 64, hi = 1.0 + (k + 1) * 2.0 / 64;
    for (double t : extra) {
      CHECK(t >= lo);
      CHECK(t <= hi);
    }
  }
}

TEST_CASE("uniform weights give uniform depths (KS)") {
  Rng rng(2024);
  const DepthSamples coarse = stratified(0.5, 4.5, 64, nullptr, false);
  const std::vector<double> w(64, 0.3);
  const auto draws = importance(coarse, w, 100000, rng);
  std::vector<double> u(draws.size());
  std::transform(draws.begin(), draws.end(), u.begin(), [](double t) { return (t - 0.5) / 4.0; });
  const double d = testing::ks_uniform(u);
  CHECK(d * std::sqrt(1e5) < testing::kKsCrit99ScaledN1e5);
}

TEST_CASE("importance histogram matches the weight pdf (chi-square)") {
  Rng wrng(99);
  std::vector<double> w(64);
  for (double& v : w) v = uniform(wrng, 0.0, 1.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const DepthSamples coarse = stratified(0.0, 1.0, 64, nullptr, false);
  Rng rng(123);
  const auto draws = importance(coarse, w, 100000, rng);
  std::vector<double> observed(64, 0.0), expected(64);
  for (double t : draws) observed[std::min<std::size_t>(63, static_cast<std::size_t>(t * 64))] += 1.0;
  for (std::size_t i = 0; i < 64; ++i) expected[i] = 1e5 * w[i] / total;
  CHECK(testing::chi_square(observed, expected) < testing::kChi2Crit99Df63);
}

TEST_CASE("zero weights fall back to the floor") {
  Rng rng(3);
  const DepthSamples coarse = stratified(0.0, 1.0, 8, nullptr, false);
  const std::vector<double> w(8, 0.0);
  const auto extra = importance(coarse, w, 200, rng);
  for (double t : extra) {
    CHECK(std::isfinite(t));
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
  }
  std::vector<double> bad(8, 0.1);
  bad[2] = -1.0;
  CHECK_THROWS_AS(importance(coarse, bad, 4, rng), InvalidArgument);
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(importance(coarse, bad, 4, rng), NumericError);
}

TEST_CASE("merge keeps coarse depths and sorts") {
  Rng rng(8);
  const DepthSamples coarse = stratified(1.0, 5.0, 64, &rng, true);
  CHECK(merge(coarse, {}).t == coarse.t);

  std::vector<double> w(64);
  for (double& v : w) v = uniform01(rng);
  const auto extra = importance(coarse, w, 32, rng);
  const DepthSamples all = merge(coarse, extra);
  REQUIRE(all.size() == 96);
  CHECK(std::count(all.is_coarse.begin(), all.is_coarse.end(), 1) == 64);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all.t[i] > all.t[i - 1]);
  std::vector<double> kept;
  for (std::size_t i : all.coarse_indices()) kept.push_back(all.t[i]);
  CHECK(kept == coarse.t);
  const auto d = all.deltas();
  CHECK(std::abs(std::accumulate(d.begin(), d.end(), 0.0) - (5.0 - all.t[0])) < 1e-12);
}

TEST_CASE("merge separates duplicate depths") {
  const DepthSamples coarse = stratified(0.0, 1.0, 4, nullptr, false);
  const std::vector<double> extra{0.375, 0.375, 1.0, 1.0};
  const DepthSamples all = merge(coarse, extra);
  REQUIRE(all.size() == 8);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all.t[i] > all.t[i - 1]);
  CHECK(all.t.back() <= 1.0);
  std::vector<double> kept;
  for (std::size_t i : all.coarse_indices()) kept.push_back(all.t[i]);
  CHECK(kept == coarse.t);
  const std::vector<double> outside{1.5};
  CHECK_THROWS_AS(merge(coarse, outside), InvalidArgument);
}
