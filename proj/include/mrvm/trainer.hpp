// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mrvm/config.hpp"
#include "mrvm/model.hpp"
#include "mrvm/renderer.hpp"
#include "mrvm/scenegen.hpp"

namespace mrvm::train {

enum class Phase { pretrain, finetune };

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct TrainConfig {
  int total_iters = 2000;
  int batch_rays = 64;
  double lr = 5e-4;
  double lambda_base = 0.1;
  double mask_ratio = 0.5;
  double tau = 0.99;
  double mrvm_start_frac = 0.10;
  /// Negative means 10% of total_iters.
  int warmup_iters = -1;
  int ref_views = 3;
  std::uint64_t seed = 0;
  MrvmMode mrvm_mode = MrvmMode::standard;
  bool bbox_sampling = true;
  bool jitter = true;
  /// Training views used per scene (evenly spaced over the train split);
  /// 0 keeps all of them.
  int train_views = 0;
  /// Checkpoint period in iterations; 0 writes one only at the end.
  int checkpoint_every = 0;
  /// Records elapsed seconds in metrics; off keeps metrics files
  /// reproducible byte for byte.
  bool log_wallclock = false;
  double grad_clip = 10.0;
  ModelConfig model;

  int effective_warmup() const;
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
/// Applies one `key=value` override; value is parsed as JSON when possible
/// and as a bare string otherwise. Nested model fields use "model.<key>".
void apply_override(TrainConfig& config, const std::string& key, const std::string& value);

double lambda_schedule(int iter, const TrainConfig& config);

struct TrainState {
  TrainConfig config;
  Phase phase = Phase::pretrain;
  Model model;
  diff::ParamStore adam_m;
  diff::ParamStore adam_v;
  std::int64_t iteration = 0;
  std::int64_t adam_steps = 0;
  std::string rng_state;
  std::int64_t clip_events = 0;
  std::int64_t aborted_steps = 0;
};

/// Fresh state; pretraining keeps the configured objective, finetuning
/// starts without heads.
TrainState init_state(const TrainConfig& config, Phase phase);
/// Finetuning state from a pretrained model: heads stripped, optimizer
/// reset, iteration 0. The model architecture comes from `pretrained`.
TrainState finetune_from(const TrainState& pretrained, const TrainConfig& config);

struct StepMetrics {
  std::int64_t iter = 0;
  double l_nerf_c = 0.0;
  double l_nerf_f = 0.0;
  double l_mrvm = 0.0;
  double lambda_eff = 0.0;
  double psnr_train_sample = 0.0;
  double wallclock_s = 0.0;
  bool clipped = false;
  bool aborted = false;
  std::size_t degenerate_pairs = 0;
};

/// Training views of a scene after the train_views subset rule.
std::vector<int> training_views(const scene::Dataset& dataset, int train_views);

/// One optimizer step on one scene: sample a target view and rays, render
/// both branches, Adam on every trainable parameter, then EMA. A non-finite
/// loss or gradient leaves the parameters untouched.
StepMetrics train_step(TrainState& state, const std::vector<scene::Dataset>& corpus, int threads);

/// Trainable (non-EMA) parameter names in store order.
std::vector<std::string> optimizer_params(const TrainState& state);

struct RunOptions {
  std::filesystem::path out_dir;
  int threads = 1;
  /// Continue from out_dir/checkpoint.bin when present.
  bool resume = false;
  /// Stop after this many iterations of the current invocation (0: none);
  /// used to simulate interruption.
  int stop_after = 0;
  std::function<void(const StepMetrics&)> on_step;
};

inline const char* kMetricsFile = "metrics.csv";
inline const char* kCheckpointFile = "checkpoint.bin";

/// Runs the loop until total_iters, appending metrics.csv and writing
/// checkpoint.bin; returns the final state.
TrainState run(TrainState state, const std::vector<scene::Dataset>& corpus, const RunOptions& options);

std::string metrics_header();
std::string metrics_row(const StepMetrics& m);

}  // namespace mrvm::train
