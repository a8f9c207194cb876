// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrvm/mrvm.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string workdir = ".";
  int threads = 1;
  std::vector<std::string> argv;
};

fs::path resolve(const Globals& g, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(g.workdir) / path;
}

std::vector<std::string> resolve_all(const Globals& g, const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const auto& p : in) out.push_back(resolve(g, p).string());
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

int fail(mrvm_status st) {
  std::cerr << "error: " << mrvm_last_error() << "\n";
  return static_cast<int>(st);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mrvm_string_free(s);
  return out;
}

struct ConfigDeleter {
  void operator()(mrvm_config* c) const { mrvm_config_free(c); }
};
using ConfigPtr = std::unique_ptr<mrvm_config, ConfigDeleter>;

struct ModelDeleter {
  void operator()(mrvm_model* m) const { mrvm_model_free(m); }
};

/// Builds a training config from an optional file plus key=value overrides.
mrvm_status make_config(const Globals& g, const std::string& path, const std::vector<std::string>& sets,
                        ConfigPtr& out) {
  mrvm_config* c = nullptr;
  mrvm_status st = path.empty() ? mrvm_config_new(&c) : mrvm_config_load(resolve(g, path).c_str(), &c);
  if (st != MRVM_OK) return st;
  out.reset(c);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      return MRVM_ERR_USAGE;
    }
    st = mrvm_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != MRVM_OK) return st;
  }
  return MRVM_OK;
}

json config_json(const mrvm_config* c) {
  char* text = nullptr;
  if (mrvm_config_dump(c, &text) != MRVM_OK) return nullptr;
  return json::parse(take(text));
}

void write_meta(const Globals& g, const fs::path& path, const std::string& command, json extra) {
  json meta = {{"command", command},
               {"argv", g.argv},
               {"version", mrvm_version()},
               {"workdir", fs::absolute(g.workdir).string()},
               {"threads", g.threads}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << meta.dump(2) << "\n";
}

bool read_file(const fs::path& p, std::string& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

void log_to_stderr(const char* msg, void*) { std::cerr << "[mrvm] " << msg << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  g.argv.assign(argv, argv + argc);
  CLI::App app{"Masked ray and view modeling for generalizable radiance fields"};
  app.require_subcommand(1);
  app.add_option("--workdir", g.workdir, "Base directory for relative paths");
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress progress messages");

  // gen-scenes
  auto* gen = app.add_subcommand("gen-scenes", "Generate a corpus of procedural scenes");
  std::string gen_config, gen_out;
  int gen_count = 8;
  std::uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--config", gen_config, "Scene generation config (JSON)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenes")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_flag("--force", gen_force, "Allow a non-empty output directory");

  // pretrain / finetune
  struct TrainArgs {
    std::string config, out, init;
    std::vector<std::string> sets, scenes;
    bool resume = false;
  };
  TrainArgs pre_args, fine_args;
  auto add_train = [&](CLI::App* sub, TrainArgs& a) {
    sub->add_option("--config", a.config, "Training config (JSON)");
    sub->add_option("--set", a.sets, "Override a config field, key=value");
    sub->add_option("--scenes", a.scenes, "Scene directories")->required();
    sub->add_option("--out", a.out, "Run directory")->required();
    sub->add_flag("--resume", a.resume, "Continue from the checkpoint in the run directory");
  };
  auto* pretrain = app.add_subcommand("pretrain", "Joint rendering and masked latent pretraining");
  add_train(pretrain, pre_args);
  auto* finetune = app.add_subcommand("finetune", "Rendering-only training, optionally from a pretrained model");
  add_train(finetune, fine_args);
  finetune->add_option("--init", fine_args.init, "Pretraining checkpoint to start from");

  // render
  auto* render = app.add_subcommand("render", "Render one view with the fine branch");
  std::string render_ckpt, render_scene, render_out;
  int render_view = 0;
  render->add_option("--ckpt", render_ckpt, "Checkpoint")->required();
  render->add_option("--scene", render_scene, "Scene directory")->required();
  render->add_option("--view", render_view, "View index")->required();
  render->add_option("--out", render_out, "Output PPM")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR and SSIM on the test views");
  std::string eval_ckpt, eval_out;
  std::vector<std::string> eval_scenes;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--scenes", eval_scenes, "Scene directories")->required();
  eval->add_option("--out", eval_out, "Report prefix (writes .csv and .json)")->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of every gradient path");
  std::uint64_t grad_seed = 0;
  std::string grad_out;
  grad->add_option("--seed", grad_seed, "Seed for the random probes");
  grad->add_option("--out", grad_out, "Report JSON");

  // ablations
  struct SweepArgs {
    std::string pre_config, fine_config, out;
    std::vector<std::string> sets, pre_sets, fine_sets, train, eval;
  };
  SweepArgs mask_args, shot_args;
  auto add_sweep = [&](CLI::App* sub, SweepArgs& a) {
    sub->add_option("--pretrain-config", a.pre_config, "Pretraining config (JSON)");
    sub->add_option("--finetune-config", a.fine_config, "Finetuning config (JSON)");
    sub->add_option("--set", a.sets, "Override for both phases, key=value");
    sub->add_option("--pretrain-set", a.pre_sets, "Override for pretraining, key=value");
    sub->add_option("--finetune-set", a.fine_sets, "Override for finetuning, key=value");
    sub->add_option("--train-scenes", a.train, "Training scene directories")->required();
    sub->add_option("--eval-scenes", a.eval, "Held-out scene directories")->required();
    sub->add_option("--out", a.out, "Sweep directory")->required();
  };
  auto* ab_mask = app.add_subcommand("ablate-mask", "Mask-ratio sweep");
  add_sweep(ab_mask, mask_args);
  std::vector<double> ratios = {0.1, 0.25, 0.5, 0.75, 0.9};
  ab_mask->add_option("--ratios", ratios, "Mask ratios")->delimiter(',');
  auto* ab_shot = app.add_subcommand("ablate-fewshot", "Training-view / reference-view sweep");
  add_sweep(ab_shot, shot_args);
  std::vector<std::string> shot_settings = {"50:5", "20:4", "10:3"};
  ab_shot->add_option("--settings", shot_settings, "train_views:ref_views pairs")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(MRVM_ERR_USAGE);
  }
  if (!quiet) mrvm_set_log(log_to_stderr, nullptr);

  if (*gen) {
    std::string config_text;
    if (!gen_config.empty() && !read_file(resolve(g, gen_config), config_text)) {
      std::cerr << "error: cannot read " << resolve(g, gen_config) << "\n";
      return MRVM_ERR_DATA;
    }
    const fs::path out = resolve(g, gen_out);
    char* summary = nullptr;
    const mrvm_status st = mrvm_gen_scenes(gen_config.empty() ? nullptr : config_text.c_str(), out.c_str(), gen_count,
                                           gen_seed, gen_force, g.threads, &summary);
    if (st != MRVM_OK) return fail(st);
    const json s = json::parse(take(summary));
    if (s.contains("warning")) std::cerr << "warning: " << s["warning"].get<std::string>() << "\n";
    std::cout << s.dump(2) << "\n";
    json gen_cfg = gen_config.empty() ? json::object() : json::parse(config_text);
    write_meta(g, gen_count > 0 ? out / "run_meta.json" : fs::path(out.string() + ".meta.json"), "gen-scenes",
               {{"seed", gen_seed}, {"count", gen_count}, {"gen_config", gen_cfg}});
    return 0;
  }

  auto run_train = [&](const TrainArgs& a, const char* phase) -> int {
    ConfigPtr cfg;
    mrvm_status st = make_config(g, a.config, a.sets, cfg);
    if (st != MRVM_OK) return fail(st);
    const auto scenes = resolve_all(g, a.scenes);
    const auto ptrs = c_strings(scenes);
    const fs::path out = resolve(g, a.out);
    const std::string init = a.init.empty() ? "" : resolve(g, a.init).string();
    const json cj = config_json(cfg.get());
    write_meta(g, out / "run_meta.json", phase,
               {{"seed", cj["seed"]}, {"config", cj}, {"scenes", scenes}, {"init", init}, {"resume", a.resume}});
    char* summary = nullptr;
    st = mrvm_train(cfg.get(), phase, ptrs.data(), ptrs.size(), init.empty() ? nullptr : init.c_str(), out.c_str(),
                    a.resume, g.threads, &summary);
    if (st != MRVM_OK) return fail(st);
    std::cout << take(summary) << "\n";
    return 0;
  };
  if (*pretrain) return run_train(pre_args, "pretrain");
  if (*finetune) return run_train(fine_args, "finetune");

  if (*render) {
    mrvm_model* raw = nullptr;
    const fs::path ckpt = resolve(g, render_ckpt), scene = resolve(g, render_scene), out = resolve(g, render_out);
    if (mrvm_status st = mrvm_model_load(ckpt.c_str(), &raw); st != MRVM_OK) return fail(st);
    std::unique_ptr<mrvm_model, ModelDeleter> model(raw);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    if (mrvm_status st = mrvm_model_render(model.get(), scene.c_str(), render_view, out.c_str(), g.threads);
        st != MRVM_OK)
      return fail(st);
    write_meta(g, out.string() + ".meta.json", "render",
               {{"checkpoint", ckpt.string()}, {"scene", scene.string()}, {"view", render_view}, {"seed", nullptr}});
    std::cout << out.string() << "\n";
    return 0;
  }

  if (*eval) {
    mrvm_model* raw = nullptr;
    const fs::path ckpt = resolve(g, eval_ckpt), out = resolve(g, eval_out);
    if (mrvm_status st = mrvm_model_load(ckpt.c_str(), &raw); st != MRVM_OK) return fail(st);
    std::unique_ptr<mrvm_model, ModelDeleter> model(raw);
    const auto scenes = resolve_all(g, eval_scenes);
    const auto ptrs = c_strings(scenes);
    char* report = nullptr;
    if (mrvm_status st = mrvm_model_evaluate(model.get(), ptrs.data(), ptrs.size(), out.c_str(), g.threads, &report);
        st != MRVM_OK)
      return fail(st);
    write_meta(g, out.string() + ".meta.json", "eval",
               {{"checkpoint", ckpt.string()}, {"scenes", scenes}, {"seed", nullptr}});
    std::cout << take(report) << "\n";
    return 0;
  }

  if (*grad) {
    char* report = nullptr;
    const mrvm_status st = mrvm_gradcheck(grad_seed, &report);
    const std::string text = take(report);
    if (!text.empty()) std::cout << text << "\n";
    const fs::path out = grad_out.empty() ? resolve(g, "gradcheck.json") : resolve(g, grad_out);
    if (!text.empty()) {
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream(out) << text << "\n";
    }
    write_meta(g, out.string() + ".meta.json", "gradcheck", {{"seed", grad_seed}});
    return st == MRVM_OK ? 0 : fail(st);
  }

  auto sweep_configs = [&](const SweepArgs& a, ConfigPtr& pre, ConfigPtr& fine) -> mrvm_status {
    std::vector<std::string> pre_sets = a.sets, fine_sets = a.sets;
    pre_sets.insert(pre_sets.end(), a.pre_sets.begin(), a.pre_sets.end());
    fine_sets.insert(fine_sets.end(), a.fine_sets.begin(), a.fine_sets.end());
    if (mrvm_status st = make_config(g, a.pre_config, pre_sets, pre); st != MRVM_OK) return st;
    return make_config(g, a.fine_config, fine_sets, fine);
  };

  auto run_sweep = [&](const SweepArgs& a, const char* name, auto&& call, json extra) -> int {
    ConfigPtr pre, fine;
    if (mrvm_status st = sweep_configs(a, pre, fine); st != MRVM_OK) return fail(st);
    const auto train = resolve_all(g, a.train), held = resolve_all(g, a.eval);
    const auto tp = c_strings(train), ep = c_strings(held);
    const fs::path out = resolve(g, a.out);
    const json pj = config_json(pre.get());
    extra["seed"] = pj["seed"];
    extra["pretrain_config"] = pj;
    extra["finetune_config"] = config_json(fine.get());
    extra["train_scenes"] = train;
    extra["eval_scenes"] = held;
    write_meta(g, out / "run_meta.json", name, extra);
    char* csv = nullptr;
    const mrvm_status st = call(pre.get(), fine.get(), tp, ep, out, &csv);
    if (st != MRVM_OK) return fail(st);
    std::cout << take(csv);
    return 0;
  };

  if (*ab_mask) {
    return run_sweep(
        mask_args, "ablate-mask",
        [&](mrvm_config* pre, mrvm_config* fine, const auto& tp, const auto& ep, const fs::path& out, char** csv) {
          return mrvm_ablate_mask(pre, fine, ratios.data(), ratios.size(), tp.data(), tp.size(), ep.data(), ep.size(),
                                  out.c_str(), g.threads, csv);
        },
        {{"ratios", ratios}});
  }

  if (*ab_shot) {
    std::vector<int> views, refs;
    for (const auto& s : shot_settings) {
      int v = 0, r = 0;
      char tail = 0;
      if (std::sscanf(s.c_str(), "%d:%d%c", &v, &r, &tail) != 2) {
        std::cerr << "error: --settings expects train_views:ref_views, got '" << s << "'\n";
        return MRVM_ERR_USAGE;
      }
      views.push_back(v);
      refs.push_back(r);
    }
    return run_sweep(
        shot_args, "ablate-fewshot",
        [&](mrvm_config* pre, mrvm_config* fine, const auto& tp, const auto& ep, const fs::path& out, char** csv) {
          return mrvm_ablate_fewshot(pre, fine, views.data(), refs.data(), views.size(), tp.data(), tp.size(),
                                     ep.data(), ep.size(), out.c_str(), g.threads, csv);
        },
        {{"settings", shot_settings}});
  }
  return MRVM_ERR_USAGE;
}
