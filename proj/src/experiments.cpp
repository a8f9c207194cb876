// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/experiments.hpp"

#include <charconv>
#include <cstdio>

#include "json_util.hpp"
#include "mrvm/renderer.hpp"

namespace mrvm::exp {

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

}  // namespace

Image render_view(const Model& model, const scene::Dataset& dataset, int view, int ref_views, int train_views,
                  int threads) {
  const auto& cams = dataset.manifest.cameras;
  if (view < 0 || static_cast<std::size_t>(view) >= cams.size())
    throw InvalidArgument("view " + std::to_string(view) + " out of range [0, " + std::to_string(cams.size()) + ")");
  const auto candidates = train::training_views(dataset, train_views);
  const auto& cam = cams[static_cast<std::size_t>(view)];
  const auto refs = render::make_references(dataset, render::nearest_views(cams, candidates, cam, ref_views, view));
  return render::render_image(model, refs, cam, dataset.manifest.bbox, threads);
}

metrics::EvalReport evaluate(const Model& model, const scene::Dataset& dataset, int ref_views, int train_views,
                             int threads, std::vector<int> views, std::vector<Image>* renders) {
  if (views.empty()) views = dataset.manifest.splits.test;
  if (views.empty()) throw DataError("dataset '" + dataset.manifest.scene_id + "' has no test views");
  metrics::EvalReport report;
  report.scene_id = dataset.manifest.scene_id;
  for (int v : views) {
    const Image img = render_view(model, dataset, v, ref_views, train_views, threads);
    const Image& gt = dataset.images[static_cast<std::size_t>(v)];
    report.views.push_back({v, metrics::psnr(img, gt), metrics::ssim(img, gt)});
    if (renders) renders->push_back(img);
  }
  report.finalize();
  return report;
}

ProtocolResult pretrain_finetune_eval(const train::TrainConfig& pretrain, const train::TrainConfig& finetune,
                                      const std::vector<scene::Dataset>& train, const std::vector<scene::Dataset>& eval,
                                      const std::filesystem::path& out_dir, int threads, const Progress& progress) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  train::RunOptions opt;
  opt.threads = threads;
  train::TrainState state = train::init_state(pretrain, train::Phase::pretrain);
  if (pretrain.total_iters > 0) {
    say(progress, "pretrain " + out_dir.string());
    opt.out_dir = out_dir / "pretrain";
    state = train::run(std::move(state), train, opt);
  }
  if (finetune.total_iters > 0) {
    say(progress, "finetune " + out_dir.string());
    opt.out_dir = out_dir / "finetune";
    state = train::run(train::finetune_from(state, finetune), train, opt);
  }
  ProtocolResult result;
  for (const auto& ds : eval) {
    say(progress, "evaluate " + ds.manifest.scene_id);
    result.reports.push_back(evaluate(state.model, ds, finetune.ref_views, finetune.train_views, threads));
  }
  for (const auto& r : result.reports) {
    result.mean_psnr += r.mean_psnr / static_cast<double>(result.reports.size());
    result.mean_ssim += r.mean_ssim / static_cast<double>(result.reports.size());
  }
  detail::write_text_file(out_dir / "eval.csv", metrics::report_csv(result.reports));
  detail::write_text_file(out_dir / "eval.json", metrics::report_json(result.reports));
  return result;
}

std::vector<SweepRow> ablate_mask(const std::vector<double>& ratios, const train::TrainConfig& pretrain,
                                  const train::TrainConfig& finetune, const std::vector<scene::Dataset>& train,
                                  const std::vector<scene::Dataset>& eval, const std::filesystem::path& out_dir,
                                  int threads, const Progress& progress) {
  if (ratios.empty()) throw InvalidArgument("ablate-mask: no ratios given");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("ablate-mask: ratio " + fmt(r) + " outside [0, 1]");
  std::vector<SweepRow> rows;
  std::string csv = "ratio,psnr,ssim\n";
  for (double r : ratios) {
    train::TrainConfig pre = pretrain;
    pre.mask_ratio = r;
    char dir[32];
    std::snprintf(dir, sizeof dir, "ratio_%.4f", r);
    const auto res = pretrain_finetune_eval(pre, finetune, train, eval, out_dir / dir, threads, progress);
    rows.push_back({fmt(r), res.mean_psnr, res.mean_ssim});
    csv += fmt(r) + "," + fmt(res.mean_psnr) + "," + fmt(res.mean_ssim) + "\n";
    detail::write_text_file(out_dir / "ablate_mask.csv", csv);
  }
  return rows;
}

std::vector<SweepRow> ablate_fewshot(const std::vector<FewShotSetting>& settings, const train::TrainConfig& pretrain,
                                     const train::TrainConfig& finetune, const std::vector<scene::Dataset>& train,
                                     const std::vector<scene::Dataset>& eval, const std::filesystem::path& out_dir,
                                     int threads, const Progress& progress) {
  if (settings.empty()) throw InvalidArgument("ablate-fewshot: no settings given");
  std::vector<SweepRow> rows;
  std::string csv = "train_views,ref_views,psnr,ssim\n";
  for (const auto& s : settings) {
    if (s.train_views < 1 || s.ref_views < 1 || s.ref_views >= s.train_views)
      throw InvalidArgument("ablate-fewshot: need 1 <= ref_views < train_views, got (" +
                            std::to_string(s.train_views) + ", " + std::to_string(s.ref_views) + ")");
    train::TrainConfig pre = pretrain, fine = finetune;
    pre.train_views = fine.train_views = s.train_views;
    pre.ref_views = fine.ref_views = s.ref_views;
    const std::string label = std::to_string(s.train_views) + "," + std::to_string(s.ref_views);
    const auto res = pretrain_finetune_eval(
        pre, fine, train, eval,
        out_dir / ("views_" + std::to_string(s.train_views) + "_refs_" + std::to_string(s.ref_views)), threads,
        progress);
    rows.push_back({label, res.mean_psnr, res.mean_ssim});
    csv += label + "," + fmt(res.mean_psnr) + "," + fmt(res.mean_ssim) + "\n";
    detail::write_text_file(out_dir / "ablate_fewshot.csv", csv);
  }
  return rows;
}

std::vector<scene::Dataset> load_corpus(const std::vector<std::filesystem::path>& dirs) {
  std::vector<scene::Dataset> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(scene::load_dataset(d));
  return out;
}

}  // namespace mrvm::exp
