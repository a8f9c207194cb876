// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mrvm/field.hpp"
#include "mrvm/gradcheck.hpp"

using namespace mrvm;
using namespace mrvm::field;
using diff::Tensor;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = uniform(rng, -scale, scale);
  return t;
}

}  // namespace

TEST_CASE("zero parameters decode to ln 2 and mid gray") {
  ModelConfig cfg;
  diff::ParamStore store;
  Rng rng(1);
  init_branch(store, kFine, cfg, rng);
  for (std::size_t i = 0; i < store.size(); ++i) std::fill(store.param(i).data.begin(), store.param(i).data.end(), 0.0);
  diff::Tape tape;
  const diff::Bindings b(tape, store, false);
  const Decoded d = decode(b, kFine, tape.constant(Tensor(3, cfg.latent_dim)), cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d.sigma.value()(i, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    for (std::size_t c = 0; c < 3; ++c) CHECK(d.color.value()(i, c) == 0.5);
  }
}

TEST_CASE("decoded ranges hold for wild latents") {
  ModelConfig cfg;
  diff::ParamStore store;
  Rng rng(2);
  init_branch(store, kCoarse, cfg, rng);
  diff::Tape tape;
  const diff::Bindings b(tape, store, false);
  const Decoded d = decode(b, kCoarse, tape.constant(random_tensor(200, cfg.latent_dim, rng, 30.0)), cfg);
  for (double s : d.sigma.value().values()) CHECK(s >= 0.0);
  for (double c : d.color.value().values()) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("mean pooling contracts") {
  Rng rng(3);
  diff::Tape tape;
  const Tensor u = random_tensor(1, 5, rng), v = random_tensor(1, 5, rng);
  Tensor uv(2, 5), uu(3, 5);
  for (std::size_t c = 0; c < 5; ++c) {
    uv(0, c) = u(0, c);
    uv(1, c) = v(0, c);
    for (std::size_t r = 0; r < 3; ++r) uu(r, c) = u(0, c);
  }
  const auto avg = pool_views(tape.constant(uv), 2).value();
  for (std::size_t c = 0; c < 5; ++c) CHECK(avg(0, c) == (u(0, c) + v(0, c)) / 2.0);
  const auto same = pool_views(tape.constant(uu), 3).value();
  for (std::size_t c = 0; c < 5; ++c) CHECK(same(0, c) == doctest::Approx(u(0, c)).epsilon(1e-15));
  const auto single = pool_views(tape.constant(uv), 1).value();
  CHECK(single.values() == uv.values());
  CHECK_THROWS_AS(pool_views(tape.constant(uu), 2), InvalidArgument);
}

TEST_CASE("pooling is bit-identical under view permutations") {
  Rng rng(4);
  const std::size_t n = 7, s = 4;
  const Tensor lat = random_tensor(n * s, 6, rng);
  std::vector<int> ids(n * s);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i % s);
  diff::Tape tape;
  const auto ref = pool_views(tape.constant(lat), s, ids).value();
  std::vector<std::size_t> perm{2, 0, 3, 1};
  do {
    Tensor shuffled(n * s, 6);
    std::vector<int> sids(n * s);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t j = 0; j < s; ++j) {
        sids[p * s + j] = static_cast<int>(perm[j]);
        for (std::size_t c = 0; c < 6; ++c) shuffled(p * s + j, c) = lat(p * s + perm[j], c);
      }
    CHECK(pool_views(tape.constant(shuffled), s, sids).value().values() == ref.values());
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("coarse and fine branches share no parameters") {
  ModelConfig cfg;
  diff::ParamStore store;
  Rng rng(5);
  init_branch(store, kCoarse, cfg, rng);
  init_branch(store, kFine, cfg, rng);
  const Tensor tokens = random_tensor(12, cfg.trunk_input_dim(), rng);
  auto coarse_out = [&](const diff::ParamStore& ps) {
    diff::Tape tape;
    const diff::Bindings b(tape, ps, false);
    const Var z = pool_views(trunk_forward(b, kCoarse, tape.constant(tokens), cfg), 3);
    const Decoded d = decode(b, kCoarse, z, cfg);
    std::vector<double> out = d.sigma.value().values();
    out.insert(out.end(), d.color.value().values().begin(), d.color.value().values().end());
    return out;
  };
  const auto before = coarse_out(store);
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.name(i).rfind("fine.", 0) == 0)
      std::fill(store.param(i).data.begin(), store.param(i).data.end(), 0.0);
  CHECK(coarse_out(store) == before);
}

TEST_CASE("field gradients match finite differences") {
  ModelConfig cfg;
  cfg.trunk_width = 5;
  cfg.latent_dim = 4;
  cfg.head_width = 5;
  cfg.token_dim = 3;
  cfg.activation = Activation::softplus;
  cfg.view_dirs = true;
  diff::ParamStore store;
  Rng rng(6);
  init_branch(store, kFine, cfg, rng);
  const Tensor tokens = random_tensor(6, cfg.trunk_input_dim(), rng);
  const std::vector<double> dirs{0.6, 0.0, 0.8, 0.0, 1.0, 0.0, -0.28, 0.96, 0.0};
  const Tensor enc = direction_encoding(dirs);
  auto loss = [&](diff::Tape& tape, const diff::Bindings& b) {
    const Var z = pool_views(trunk_forward(b, kFine, tape.constant(tokens), cfg), 2);
    const Decoded d = decode(b, kFine, z, cfg, tape.constant(enc));
    return diff::add(diff::sum(d.sigma), diff::sum(diff::mul(d.color, d.color)));
  };
  CHECK(diff::finite_diff_check(loss, store, 1e-5).max_rel_error <= 1e-4);
}

TEST_CASE("point pipeline gradient audit") {
  const auto e = gradcheck::check_pipeline(11, MrvmMode::off);
  INFO(e.name, " worst ", e.report.worst_param, " rel ", e.report.max_rel_error);
  CHECK(e.passed());
  CHECK(e.report.coords_checked > 100);
}
