// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mrvm/nn.hpp"

namespace mrvm::field {

void init_branch(diff::ParamStore& store, const std::string& branch, const ModelConfig& config, Rng& rng) {
  nn::add_dense(store, branch + ".l1", config.trunk_input_dim(), config.trunk_width, rng);
  nn::add_dense(store, branch + ".l2", config.trunk_width, config.trunk_width, rng);
  nn::add_dense(store, branch + ".l3", config.trunk_width, config.latent_dim, rng);
  nn::add_dense(store, branch + ".head1", config.head_input_dim(), config.head_width, rng);
  nn::add_dense(store, branch + ".head2", config.head_width, 4, rng);
}

Var trunk_forward(const Bindings& params, const std::string& branch, Var tokens, const ModelConfig& config) {
  if (tokens.rows() == 0) throw InvalidArgument("trunk_forward: no tokens (zero views)");
  Var x = nn::activate(nn::dense(params, branch + ".l1", tokens), config.activation);
  x = nn::activate(nn::dense(params, branch + ".l2", x), config.activation);
  return nn::dense(params, branch + ".l3", x);
}

Var pool_views(Var latents, std::size_t n_views, std::span<const int> view_order) {
  if (n_views == 0 || latents.rows() % n_views != 0)
    throw InvalidArgument("pool_views: rows not divisible by view count");
  Var rows = latents;
  if (!view_order.empty()) {
    if (view_order.size() != latents.rows()) throw InvalidArgument("pool_views: view_order size mismatch");
    std::vector<std::size_t> order(latents.rows());
    for (std::size_t base = 0; base < order.size(); base += n_views) {
      std::iota(order.begin() + static_cast<long>(base), order.begin() + static_cast<long>(base + n_views), base);
      std::stable_sort(order.begin() + static_cast<long>(base), order.begin() + static_cast<long>(base + n_views),
                       [&](std::size_t a, std::size_t b) { return view_order[a] < view_order[b]; });
    }
    rows = diff::gather_rows(latents, std::move(order));
  }
  return diff::scale(diff::group_sum(rows, n_views), 1.0 / static_cast<double>(n_views));
}

Decoded decode(const Bindings& params, const std::string& branch, Var pooled, const ModelConfig& config,
               Var dir_encoding) {
  Var input = pooled;
  if (config.view_dirs) {
    if (!dir_encoding.valid()) throw InvalidArgument("decode: view_dirs enabled but no direction encoding");
    input = diff::concat(pooled, dir_encoding);
  }
  const Var hidden = nn::activate(nn::dense(params, branch + ".head1", input), config.activation);
  const Var raw = nn::dense(params, branch + ".head2", hidden);
  return {diff::softplus(diff::slice(raw, 0, 1)), diff::sigmoid(diff::slice(raw, 1, 4))};
}

diff::Tensor direction_encoding(std::span<const double> directions_xyz) {
  const std::size_t n = directions_xyz.size() / 3;
  diff::Tensor enc(n, 15);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = directions_xyz[i * 3 + a];
      enc(i, a) = d;
      for (int k = 0; k < 2; ++k) {
        const double arg = std::ldexp(std::numbers::pi * d, k);
        enc(i, 3 + static_cast<std::size_t>(k) * 6 + a) = std::sin(arg);
        enc(i, 3 + static_cast<std::size_t>(k) * 6 + 3 + a) = std::cos(arg);
      }
    }
  }
  return enc;
}

}  // namespace mrvm::field
