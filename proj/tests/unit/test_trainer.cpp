// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrvm/checkpoint.hpp"
#include "mrvm/objective.hpp"
#include "mrvm/trainer.hpp"

using namespace mrvm;
using namespace mrvm::train;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train(int iters = 6) {
  TrainConfig c;
  c.total_iters = iters;
  c.batch_rays = 8;
  c.ref_views = 2;
  c.model = testing::tiny_model();
  return c;
}

const std::vector<scene::Dataset>& corpus() {
  static const std::vector<scene::Dataset> c = testing::toy_corpus(testing::fresh_dir("trainer_corpus"), 2, 17);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double total(const StepMetrics& m) { return m.l_nerf_c + m.l_nerf_f + m.lambda_eff * m.l_mrvm; }

}  // namespace

TEST_CASE("lambda schedule anchors") {
  TrainConfig c;
  c.total_iters = 1000;
  CHECK(c.effective_warmup() == 100);
  CHECK(lambda_schedule(0, c) == 0.0);
  CHECK(lambda_schedule(99, c) == 0.0);
  CHECK(lambda_schedule(100, c) == 0.0);
  CHECK(lambda_schedule(150, c) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(lambda_schedule(200, c) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lambda_schedule(999, c) == doctest::Approx(0.1).epsilon(1e-15));
  double last = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double v = lambda_schedule(i, c);
    CHECK(v >= last);
    CHECK(v - last <= 0.1 / 100 + 1e-15);
    last = v;
  }
  c.warmup_iters = 0;
  CHECK(lambda_schedule(100, c) == 0.1);
}

TEST_CASE("config json round trip and overrides") {
  TrainConfig c = tiny_train();
  c.mrvm_mode = MrvmMode::featmask1;
  c.seed = 42;
  const std::string text = train_config_to_json(c);
  CHECK(train_config_to_json(train_config_from_json(text)) == text);
  CHECK_THROWS_AS(train_config_from_json("{\"no_such_field\": 1}"), InvalidArgument);
  apply_override(c, "lr", "0.01");
  apply_override(c, "model.n_coarse", "16");
  apply_override(c, "mrvm_mode", "off");
  CHECK(c.lr == 0.01);
  CHECK(c.model.n_coarse == 16);
  CHECK(c.mrvm_mode == MrvmMode::off);
  CHECK_THROWS_AS(apply_override(c, "bogus", "1"), InvalidArgument);
  CHECK_THROWS_AS(apply_override(c, "mask_ratio", "1.5"), InvalidArgument);
}

TEST_CASE("training steps are deterministic and thread independent") {
  auto run_steps = [](int threads) {
    TrainState s = init_state(tiny_train(), Phase::pretrain);
    std::string rows;
    for (int i = 0; i < 3; ++i) rows += metrics_row(train_step(s, corpus(), threads));
    return std::make_pair(rows, s.model.params.param(0).data);
  };
  const auto a = run_steps(1), b = run_steps(1), c = run_steps(4);
  CHECK(a.first == b.first);
  CHECK(a.first == c.first);
  CHECK(a.second == c.second);
}

TEST_CASE("optimizer step precedes the ema update") {
  TrainConfig c = tiny_train();
  c.mrvm_start_frac = 0.0;
  c.warmup_iters = 0;
  TrainState s = init_state(c, Phase::pretrain);
  for (std::size_t i = 0; i < s.model.params.size(); ++i)
    if (s.model.params.name(i).rfind(objective::kTargetProj, 0) == 0)
      for (double& v : s.model.params.param(i).data) v *= 0.5;
  const diff::ParamStore before = s.model.params;
  const StepMetrics m = train_step(s, corpus(), 1);
  REQUIRE_FALSE(m.aborted);
  CHECK(m.lambda_eff == 0.1);
  bool online_moved = false;
  for (std::size_t i = 0; i < s.model.params.size(); ++i) {
    const std::string& name = s.model.params.name(i);
    if (name.rfind(objective::kTargetProj, 0) != 0) continue;
    const std::string online = objective::kOnlineProj + name.substr(objective::kTargetProj.size());
    const auto& theta = s.model.params.at(online).data;
    online_moved |= theta != before.at(online).data;
    for (std::size_t k = 0; k < theta.size(); ++k)
      CHECK(s.model.params.param(i).data[k] == 0.99 * before.param(i).data[k] + (1.0 - 0.99) * theta[k]);
  }
  CHECK(online_moved);
}

TEST_CASE("targets keep tracking while the latent weight is zero") {
  TrainState s = init_state(tiny_train(100), Phase::pretrain);
  for (std::size_t i = 0; i < s.model.params.size(); ++i)
    if (s.model.params.name(i).rfind(objective::kTargetProj, 0) == 0)
      for (double& v : s.model.params.param(i).data) v = 0.0;
  const StepMetrics m = train_step(s, corpus(), 1);
  CHECK(m.lambda_eff == 0.0);
  const auto& theta = s.model.params.at("proj.l1.w").data;
  const auto& big = s.model.params.at("target_proj.l1.w").data;
  for (std::size_t k = 0; k < theta.size(); ++k) CHECK(big[k] == (1.0 - 0.99) * theta[k]);
}

TEST_CASE("a single small step lowers the batch loss") {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig c = tiny_train();
    c.seed = seed;
    c.lr = 1e-4;
    c.mrvm_start_frac = 0.0;
    c.warmup_iters = 0;
    TrainState s = init_state(c, Phase::pretrain);
    const TrainState replay = s;
    const StepMetrics first = train_step(s, corpus(), 1);
    TrainState after = replay;
    after.model = s.model;
    const StepMetrics second = train_step(after, corpus(), 1);
    improved += total(second) < total(first);
  }
  CHECK(improved >= 9);
}

TEST_CASE("non-finite steps leave parameters untouched") {
  TrainState s = init_state(tiny_train(), Phase::pretrain);
  s.model.params.at("fine.head2.b").data[0] = std::numeric_limits<double>::quiet_NaN();
  const diff::ParamStore before = s.model.params;
  const diff::ParamStore m_before = s.adam_m;
  const StepMetrics m = train_step(s, corpus(), 1);
  CHECK(m.aborted);
  CHECK(s.aborted_steps == 1);
  CHECK(s.adam_steps == 0);
  for (std::size_t i = 0; i < s.model.params.size(); ++i) {
    const auto& a = s.model.params.param(i).data;
    const auto& b = before.param(i).data;
    for (std::size_t k = 0; k < a.size(); ++k) CHECK((a[k] == b[k] || (std::isnan(a[k]) && std::isnan(b[k]))));
  }
  for (std::size_t i = 0; i < s.adam_m.size(); ++i) CHECK(s.adam_m.param(i).data == m_before.param(i).data);
}

TEST_CASE("finetuning strips the pretraining heads") {
  TrainState pre = init_state(tiny_train(), Phase::pretrain);
  train_step(pre, corpus(), 1);
  TrainConfig fc = tiny_train();
  fc.model.trunk_width = 99;
  const TrainState ft = finetune_from(pre, fc);
  CHECK(ft.phase == Phase::finetune);
  CHECK(ft.iteration == 0);
  CHECK(ft.adam_steps == 0);
  CHECK(ft.model.mode == MrvmMode::off);
  CHECK(ft.config.model.trunk_width == pre.config.model.trunk_width);
  for (const auto& n : optimizer_params(ft)) {
    CHECK_FALSE(is_pretrain_head(n));
    CHECK(ft.model.params.at(n).data == pre.model.params.at(n).data);
  }
  CHECK(optimizer_params(ft).size() < optimizer_params(pre).size());
  TrainState step = ft;
  const StepMetrics m = train_step(step, corpus(), 1);
  CHECK(m.l_mrvm == 0.0);
  CHECK(m.lambda_eff == 0.0);
}

TEST_CASE("interrupted runs resume bit-identically") {
  const TrainConfig c = tiny_train(8);
  const fs::path full = testing::fresh_dir("resume_full"), part = testing::fresh_dir("resume_part");
  RunOptions o;
  o.out_dir = full;
  run(init_state(c, Phase::pretrain), corpus(), o);

  o.out_dir = part;
  o.stop_after = 3;
  TrainConfig every = c;
  every.checkpoint_every = 3;
  run(init_state(every, Phase::pretrain), corpus(), o);
  o.stop_after = 0;
  o.resume = true;
  run(init_state(every, Phase::pretrain), corpus(), o);

  CHECK(slurp(full / kMetricsFile) == slurp(part / kMetricsFile));
  const TrainState a = load_checkpoint(full / kCheckpointFile);
  const TrainState b = load_checkpoint(part / kCheckpointFile);
  CHECK(a.iteration == 8);
  CHECK(b.iteration == 8);
  CHECK(a.rng_state == b.rng_state);
  for (std::size_t i = 0; i < a.model.params.size(); ++i) CHECK(a.model.params.param(i).data == b.model.params.param(i).data);
}

TEST_CASE("metrics csv has the documented columns") {
  CHECK(metrics_header() == "iter,L_nerf_c,L_nerf_f,L_mrvm,lambda_eff,psnr_train_sample,wallclock_s\n");
}
