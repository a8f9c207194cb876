// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/mrvm.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "json_util.hpp"
#include "mrvm/checkpoint.hpp"
#include "mrvm/experiments.hpp"
#include "mrvm/gradcheck.hpp"
#include "mrvm/scenegen.hpp"
#include "mrvm/trainer.hpp"

#ifndef MRVM_VERSION_STRING
#define MRVM_VERSION_STRING "0.1.0"
#endif

struct mrvm_config {
  mrvm::train::TrainConfig config;
};

struct mrvm_model {
  mrvm::Model model;
  int ref_views = 3;
  int train_views = 0;
};

namespace {

namespace fs = std::filesystem;
using mrvm::detail::json;

thread_local std::string g_last_error;
std::mutex g_log_mutex;
mrvm_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_message(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_fn) g_log_fn(msg.c_str(), g_log_user);
}

template <class F>
mrvm_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MRVM_OK;
  } catch (const mrvm::InvalidArgument& e) {
    g_last_error = e.what();
    return MRVM_ERR_USAGE;
  } catch (const mrvm::NumericError& e) {
    g_last_error = e.what();
    return MRVM_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MRVM_ERR_DATA;
  } catch (...) {
    g_last_error = "unknown error";
    return MRVM_ERR_DATA;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw mrvm::InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

std::vector<fs::path> paths(const char* const* dirs, size_t n, const char* what) {
  if (n > 0) require(dirs, what);
  std::vector<fs::path> out;
  for (size_t i = 0; i < n; ++i) {
    require(dirs[i], what);
    out.emplace_back(dirs[i]);
  }
  if (out.empty()) throw mrvm::InvalidArgument(std::string(what) + ": at least one scene directory is required");
  return out;
}

json report_entry(const mrvm::gradcheck::Entry& e) {
  return {{"name", e.name},
          {"max_rel_error", e.report.max_rel_error},
          {"worst_param", e.report.worst_param},
          {"worst_index", e.report.worst_index},
          {"coords_checked", e.report.coords_checked},
          {"passed", e.passed()}};
}

std::string sweep_csv(const fs::path& file) { return mrvm::detail::read_text_file(file); }

}  // namespace

extern "C" {

const char* mrvm_version(void) { return MRVM_VERSION_STRING; }

const char* mrvm_last_error(void) { return g_last_error.c_str(); }

void mrvm_string_free(char* s) { std::free(s); }

void mrvm_set_log(mrvm_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

mrvm_status mrvm_config_new(mrvm_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new mrvm_config{};
  });
}

mrvm_status mrvm_config_parse(const char* text, mrvm_config** out) {
  return guard([&] {
    require(text, "json");
    require(out, "out");
    *out = new mrvm_config{mrvm::train::train_config_from_json(text)};
  });
}

mrvm_status mrvm_config_load(const char* path, mrvm_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    const std::string text = mrvm::detail::read_text_file(path);
    try {
      *out = new mrvm_config{mrvm::train::train_config_from_json(text)};
    } catch (const mrvm::InvalidArgument& e) {
      throw mrvm::InvalidArgument(std::string(path) + ": " + e.what());
    }
  });
}

mrvm_status mrvm_config_set(mrvm_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    mrvm::train::apply_override(config->config, key, value);
  });
}

mrvm_status mrvm_config_dump(const mrvm_config* config, char** out_json) {
  return guard([&] {
    require(config, "config");
    require(out_json, "out_json");
    *out_json = dup_string(mrvm::train::train_config_to_json(config->config));
  });
}

void mrvm_config_free(mrvm_config* config) { delete config; }

mrvm_status mrvm_gen_scenes(const char* gen_config_json, const char* out_dir, int count, uint64_t seed, int force,
                            int threads, char** summary_json) {
  return guard([&] {
    require(out_dir, "out_dir");
    if (count < 0) throw mrvm::InvalidArgument("count must be >= 0");
    const mrvm::scene::GenConfig gen =
        gen_config_json ? mrvm::scene::gen_config_from_json(gen_config_json) : mrvm::scene::GenConfig{};
    json summary = {{"count", count}, {"seed", seed}, {"scenes", json::array()}};
    if (count == 0) {
      summary["warning"] = "count is 0; nothing generated";
      emit(summary_json, summary.dump(2));
      return;
    }
    const fs::path root(out_dir);
    if (fs::exists(root) && !fs::is_empty(root) && !force)
      throw mrvm::InvalidArgument("output directory " + root.string() + " is not empty (use force to overwrite)");
    fs::create_directories(root);
    const int total = gen.train_views + gen.test_views;
    const auto cams = mrvm::scene::orbit_cameras(gen, total);
    const auto splits = mrvm::scene::make_splits(total, gen.test_views);
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%03d", i);
      mrvm::Rng rng = mrvm::make_rng(seed, 0x5CE7E, static_cast<std::uint64_t>(i));
      const auto scene = mrvm::scene::sample_scene(rng, gen);
      log_message(std::string("emitting ") + name);
      mrvm::scene::emit_dataset(scene, cams, splits, root / name, name, threads);
      summary["scenes"].push_back({{"scene_id", name},
                                   {"dir", (root / name).string()},
                                   {"primitives", scene.primitives.size()},
                                   {"views", total}});
    }
    emit(summary_json, summary.dump(2));
  });
}

mrvm_status mrvm_train(const mrvm_config* config, const char* phase, const char* const* scene_dirs, size_t n_scenes,
                       const char* init_checkpoint, const char* out_dir, int resume, int threads,
                       char** summary_json) {
  return guard([&] {
    require(config, "config");
    require(phase, "phase");
    require(out_dir, "out_dir");
    const auto p = mrvm::train::phase_from_string(phase);
    const auto corpus = mrvm::exp::load_corpus(paths(scene_dirs, n_scenes, "scene_dirs"));
    mrvm::train::TrainState state;
    if (init_checkpoint != nullptr) {
      if (p != mrvm::train::Phase::finetune)
        throw mrvm::InvalidArgument("an initial checkpoint is only accepted for finetuning");
      state = mrvm::train::finetune_from(mrvm::load_checkpoint(init_checkpoint), config->config);
    } else {
      state = mrvm::train::init_state(config->config, p);
    }
    mrvm::train::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    opt.resume = resume != 0;
    const int every = std::max(1, state.config.total_iters / 20);
    opt.on_step = [&](const mrvm::train::StepMetrics& m) {
      if ((m.iter + 1) % every == 0)
        log_message("iter " + std::to_string(m.iter + 1) + "/" + std::to_string(state.config.total_iters) +
                    " L_nerf_f " + std::to_string(m.l_nerf_f) + " L_mrvm " + std::to_string(m.l_mrvm) +
                    " psnr " + std::to_string(m.psnr_train_sample));
    };
    state = mrvm::train::run(std::move(state), corpus, opt);
    json summary = {{"phase", phase},
                    {"iterations", state.iteration},
                    {"clip_events", state.clip_events},
                    {"aborted_steps", state.aborted_steps},
                    {"checkpoint", (fs::path(out_dir) / mrvm::train::kCheckpointFile).string()},
                    {"metrics", (fs::path(out_dir) / mrvm::train::kMetricsFile).string()},
                    {"config", json::parse(mrvm::train::train_config_to_json(state.config))}};
    emit(summary_json, summary.dump(2));
  });
}

mrvm_status mrvm_model_load(const char* checkpoint, mrvm_model** out) {
  return guard([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    auto state = mrvm::load_checkpoint(checkpoint);
    *out = new mrvm_model{std::move(state.model), state.config.ref_views, state.config.train_views};
  });
}

void mrvm_model_free(mrvm_model* model) { delete model; }

mrvm_status mrvm_model_render(const mrvm_model* model, const char* scene_dir, int view, const char* out_ppm,
                              int threads) {
  return guard([&] {
    require(model, "model");
    require(scene_dir, "scene_dir");
    require(out_ppm, "out_ppm");
    const auto ds = mrvm::scene::load_dataset(scene_dir);
    const auto img = mrvm::exp::render_view(model->model, ds, view, model->ref_views, model->train_views, threads);
    mrvm::write_ppm(out_ppm, img);
  });
}

mrvm_status mrvm_model_evaluate(const mrvm_model* model, const char* const* scene_dirs, size_t n_scenes,
                                const char* out_prefix, int threads, char** report_json) {
  return guard([&] {
    require(model, "model");
    const auto corpus = mrvm::exp::load_corpus(paths(scene_dirs, n_scenes, "scene_dirs"));
    std::vector<mrvm::metrics::EvalReport> reports;
    for (const auto& ds : corpus) {
      log_message("evaluating " + ds.manifest.scene_id);
      reports.push_back(mrvm::exp::evaluate(model->model, ds, model->ref_views, model->train_views, threads));
    }
    if (out_prefix != nullptr) {
      const fs::path prefix(out_prefix);
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      mrvm::detail::write_text_file(fs::path(prefix.string() + ".csv"), mrvm::metrics::report_csv(reports));
      mrvm::detail::write_text_file(fs::path(prefix.string() + ".json"), mrvm::metrics::report_json(reports));
    }
    emit(report_json, mrvm::metrics::report_json(reports));
  });
}

mrvm_status mrvm_gradcheck(uint64_t seed, char** report_json) {
  bool all_passed = true;
  mrvm_status st = guard([&] {
    json out = json::array();
    for (const auto& e : mrvm::gradcheck::check_all(seed)) {
      log_message(e.name + " max_rel_error " + std::to_string(e.report.max_rel_error));
      out.push_back(report_entry(e));
      all_passed = all_passed && e.passed();
    }
    emit(report_json, out.dump(2));
  });
  if (st == MRVM_OK && !all_passed) {
    g_last_error = "gradient check exceeded the tolerance";
    return MRVM_ERR_NUMERIC;
  }
  return st;
}

mrvm_status mrvm_ablate_mask(const mrvm_config* pretrain, const mrvm_config* finetune, const double* ratios,
                             size_t n_ratios, const char* const* train_dirs, size_t n_train,
                             const char* const* eval_dirs, size_t n_eval, const char* out_dir, int threads,
                             char** csv) {
  return guard([&] {
    require(pretrain, "pretrain");
    require(finetune, "finetune");
    require(out_dir, "out_dir");
    std::vector<double> r = mrvm::exp::kDefaultMaskRatios;
    if (n_ratios > 0) {
      require(ratios, "ratios");
      r.assign(ratios, ratios + n_ratios);
    }
    const auto train = mrvm::exp::load_corpus(paths(train_dirs, n_train, "train_dirs"));
    const auto eval = mrvm::exp::load_corpus(paths(eval_dirs, n_eval, "eval_dirs"));
    mrvm::exp::ablate_mask(r, pretrain->config, finetune->config, train, eval, out_dir, threads, log_message);
    emit(csv, sweep_csv(fs::path(out_dir) / "ablate_mask.csv"));
  });
}

mrvm_status mrvm_ablate_fewshot(const mrvm_config* pretrain, const mrvm_config* finetune, const int* train_views,
                                const int* ref_views, size_t n_settings, const char* const* train_dirs,
                                size_t n_train, const char* const* eval_dirs, size_t n_eval, const char* out_dir,
                                int threads, char** csv) {
  return guard([&] {
    require(pretrain, "pretrain");
    require(finetune, "finetune");
    require(out_dir, "out_dir");
    std::vector<mrvm::exp::FewShotSetting> settings = mrvm::exp::kDefaultFewShot;
    if (n_settings > 0) {
      require(train_views, "train_views");
      require(ref_views, "ref_views");
      settings.clear();
      for (size_t i = 0; i < n_settings; ++i) settings.push_back({train_views[i], ref_views[i]});
    }
    const auto train = mrvm::exp::load_corpus(paths(train_dirs, n_train, "train_dirs"));
    const auto eval = mrvm::exp::load_corpus(paths(eval_dirs, n_eval, "eval_dirs"));
    mrvm::exp::ablate_fewshot(settings, pretrain->config, finetune->config, train, eval, out_dir, threads,
                              log_message);
    emit(csv, sweep_csv(fs::path(out_dir) / "ablate_fewshot.csv"));
  });
}

}  // extern "C"
