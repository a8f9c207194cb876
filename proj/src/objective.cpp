// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/objective.hpp"

#include <cmath>

#include "mrvm/field.hpp"
#include "mrvm/nn.hpp"

namespace mrvm::objective {

void init_heads(diff::ParamStore& store, const ModelConfig& config, MrvmMode mode, Rng& rng) {
  if (mode == MrvmMode::off) return;
  nn::add_dense(store, "proj.l1", config.latent_dim, config.proj_hidden, rng);
  nn::add_dense(store, "proj.l2", config.proj_hidden, config.proj_dim, rng);
  nn::add_dense(store, "pred.l1", config.proj_dim, config.proj_hidden, rng);
  nn::add_dense(store, "pred.l2", config.proj_hidden, config.proj_dim, rng);
  nn::copy_prefix(store, kOnlineProj, kTargetProj);
  if (mode == MrvmMode::featmask1) {
    nn::add_dense(store, "recon.l1", config.latent_dim, config.recon_hidden, rng);
    nn::add_dense(store, "recon.l2", config.recon_hidden, config.token_dim, rng);
  } else if (mode == MrvmMode::featmask2) {
    nn::copy_prefix(store, field::kFine + ".", kFineTarget);
  }
}

Var online_project_predict(const Bindings& params, Var z_fine, const ModelConfig& config) {
  Var x = nn::activate(nn::dense(params, "proj.l1", z_fine), config.activation);
  x = nn::dense(params, "proj.l2", x);
  x = nn::activate(nn::dense(params, "pred.l1", x), config.activation);
  return nn::dense(params, "pred.l2", x);
}

Var target_project(diff::Tape& tape, const diff::ParamStore& params, const diff::Tensor& z_coarse,
                   const ModelConfig& config) {
  Bindings target;
  target.bind(tape, params, kTargetProj, false);
  Var x = nn::activate(nn::dense(target, "target_proj.l1", tape.constant(z_coarse)), config.activation);
  return nn::dense(target, "target_proj.l2", x);
}

void ema_update(diff::ParamStore& store, const std::string& target_prefix, const std::string& online_prefix,
                double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("ema_update: tau must lie in [0, 1]");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.name(i);
    if (name.compare(0, online_prefix.size(), online_prefix) != 0) continue;
    const diff::Param& online = store.param(i);
    diff::Param& target = store.at(target_prefix + name.substr(online_prefix.size()));
    if (target.rows != online.rows || target.cols != online.cols)
      throw InvalidArgument("ema_update: shape mismatch for '" + name + "'");
    for (std::size_t k = 0; k < online.data.size(); ++k)
      target.data[k] = tau * target.data[k] + (1.0 - tau) * online.data[k];
  }
}

LossTerms alignment_loss(Var online, Var target, std::size_t pairs_per_ray) {
  if (!online.value().same_shape(target.value()))
    throw InvalidArgument("alignment_loss: shape mismatch " + online.value().shape_string() + " vs " +
                          target.value().shape_string());
  if (pairs_per_ray == 0 || online.rows() % pairs_per_ray != 0)
    throw InvalidArgument("alignment_loss: rows not divisible by pairs per ray");
  diff::Tape& tape = online.tape();
  LossTerms out;
  diff::Tensor keep(online.rows(), 1, 1.0);
  for (std::size_t r = 0; r < online.rows(); ++r) {
    double na = 0.0, nb = 0.0;
    for (double v : online.value().row_span(r)) na += v * v;
    for (double v : target.value().row_span(r)) nb += v * v;
    if (std::sqrt(na) <= diff::kNormalizeEps || std::sqrt(nb) <= diff::kNormalizeEps) {
      keep[r] = 0.0;
      ++out.degenerate;
    }
  }
  const Var d = diff::sub(diff::normalize(online), diff::normalize(target));
  Var per_pair = diff::row_sum(diff::mul(d, d));
  if (out.degenerate > 0) per_pair = diff::mul(per_pair, tape.constant(std::move(keep)));
  out.per_ray = diff::scale(diff::group_sum(per_pair, pairs_per_ray), 1.0 / static_cast<double>(pairs_per_ray));
  return out;
}

Var reconstruction_loss(const Bindings& params, Var view_latents, const diff::Tensor& original_tokens,
                        const std::vector<std::uint8_t>& masked_rows, const std::vector<std::size_t>& ray_of_row,
                        std::size_t n_rays, const ModelConfig& config) {
  if (masked_rows.size() != view_latents.rows() || ray_of_row.size() != view_latents.rows() ||
      original_tokens.rows() != view_latents.rows())
    throw InvalidArgument("reconstruction_loss: row bookkeeping does not match latents");
  diff::Tape& tape = view_latents.tape();
  std::vector<std::size_t> rows;
  std::vector<double> count(n_rays, 0.0);
  for (std::size_t r = 0; r < masked_rows.size(); ++r)
    if (masked_rows[r]) {
      rows.push_back(r);
      count[ray_of_row[r]] += 1.0;
    }
  if (rows.empty()) return tape.constant(diff::Tensor(n_rays, 1));

  diff::Tensor target(rows.size(), original_tokens.cols());
  diff::Tensor average(n_rays, rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = original_tokens.row_span(rows[k]);
    std::copy(src.begin(), src.end(), target.row_span(k).begin());
    average(ray_of_row[rows[k]], k) = 1.0 / count[ray_of_row[rows[k]]];
  }
  Var x = diff::gather_rows(view_latents, rows);
  x = nn::activate(nn::dense(params, "recon.l1", x), config.activation);
  x = nn::dense(params, "recon.l2", x);
  const Var d = diff::sub(diff::normalize(x), diff::normalize(tape.constant(std::move(target))));
  return diff::matmul(tape.constant(std::move(average)), diff::row_sum(diff::mul(d, d)));
}

}  // namespace mrvm::objective
