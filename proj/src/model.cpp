// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/model.hpp"

#include "mrvm/encoder.hpp"
#include "mrvm/field.hpp"
#include "mrvm/objective.hpp"
#include "mrvm/rng.hpp"

namespace mrvm {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

constexpr std::uint64_t kInitStream = 0x1A17;

}  // namespace

Model init_model(const ModelConfig& config, MrvmMode mode, std::uint64_t seed) {
  config.validate();
  Model m{config, mode, diff::ParamStore(seed)};
  Rng rng = make_rng(seed, kInitStream);
  encoder::init_params(m.params, config, rng);
  field::init_branch(m.params, field::kCoarse, config, rng);
  field::init_branch(m.params, field::kFine, config, rng);
  objective::init_heads(m.params, config, mode, rng);
  return m;
}

bool is_ema_target(const std::string& name) {
  return starts_with(name, objective::kTargetProj) || starts_with(name, objective::kFineTarget);
}

bool is_pretrain_head(const std::string& name) {
  return is_ema_target(name) || starts_with(name, objective::kOnlineProj) || starts_with(name, objective::kPredictor) ||
         starts_with(name, objective::kRecon);
}

void strip_heads(Model& model) {
  for (const std::string& prefix : {objective::kOnlineProj, objective::kPredictor, objective::kTargetProj,
                                    objective::kRecon, objective::kFineTarget})
    model.params.erase_prefix(prefix);
  model.mode = MrvmMode::off;
}

}  // namespace mrvm
