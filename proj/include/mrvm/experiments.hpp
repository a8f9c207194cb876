// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mrvm/metrics.hpp"
#include "mrvm/model.hpp"
#include "mrvm/scenegen.hpp"
#include "mrvm/trainer.hpp"

/// Evaluation and the pretrain/finetune/evaluate protocol behind the
/// ablation sweeps.
namespace mrvm::exp {

/// Renders `view` with the fine branch, conditioned on the `ref_views`
/// nearest training views (the view itself excluded).
Image render_view(const Model& model, const scene::Dataset& dataset, int view, int ref_views, int train_views,
                  int threads);

/// PSNR/SSIM of every view in `views` (test split when empty).
metrics::EvalReport evaluate(const Model& model, const scene::Dataset& dataset, int ref_views, int train_views,
                             int threads, std::vector<int> views = {}, std::vector<Image>* renders = nullptr);

struct ProtocolResult {
  std::vector<metrics::EvalReport> reports;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

using Progress = std::function<void(const std::string&)>;

/// Pretrains on `train`, finetunes the stripped model on `train`, then
/// evaluates on `eval`. Each stage writes under out_dir. A zero iteration
/// count skips that stage.
ProtocolResult pretrain_finetune_eval(const train::TrainConfig& pretrain, const train::TrainConfig& finetune,
                                      const std::vector<scene::Dataset>& train, const std::vector<scene::Dataset>& eval,
                                      const std::filesystem::path& out_dir, int threads, const Progress& progress = {});

inline const std::vector<double> kDefaultMaskRatios = {0.1, 0.25, 0.5, 0.75, 0.9};

struct FewShotSetting {
  int train_views = 0;
  int ref_views = 0;
};
inline const std::vector<FewShotSetting> kDefaultFewShot = {{50, 5}, {20, 4}, {10, 3}};

struct SweepRow {
  std::string label;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// One protocol run per ratio with identical seeds; writes
/// out_dir/ablate_mask.csv with columns ratio, psnr, ssim.
std::vector<SweepRow> ablate_mask(const std::vector<double>& ratios, const train::TrainConfig& pretrain,
                                  const train::TrainConfig& finetune, const std::vector<scene::Dataset>& train,
                                  const std::vector<scene::Dataset>& eval, const std::filesystem::path& out_dir,
                                  int threads, const Progress& progress = {});

/// One protocol run per (training views, reference views) setting; writes
/// out_dir/ablate_fewshot.csv with columns train_views, ref_views, psnr, ssim.
std::vector<SweepRow> ablate_fewshot(const std::vector<FewShotSetting>& settings, const train::TrainConfig& pretrain,
                                     const train::TrainConfig& finetune, const std::vector<scene::Dataset>& train,
                                     const std::vector<scene::Dataset>& eval, const std::filesystem::path& out_dir,
                                     int threads, const Progress& progress = {});

std::vector<scene::Dataset> load_corpus(const std::vector<std::filesystem::path>& dirs);

}  // namespace mrvm::exp
