// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json_util.hpp"
#include "mrvm/checkpoint.hpp"
#include "mrvm/metrics.hpp"
#include "mrvm/objective.hpp"

namespace mrvm::train {

using detail::json;

namespace {

constexpr std::uint64_t kMasterStream = 0x7A1E;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

json model_to_json(const ModelConfig& m) {
  return {{"feature_dim", m.feature_dim},   {"token_dim", m.token_dim},
          {"trunk_width", m.trunk_width},   {"latent_dim", m.latent_dim},
          {"head_width", m.head_width},     {"proj_dim", m.proj_dim},
          {"proj_hidden", m.proj_hidden},   {"recon_hidden", m.recon_hidden},
          {"n_coarse", m.n_coarse},         {"n_fine_extra", m.n_fine_extra},
          {"activation", to_string(m.activation)}, {"depth_encoding", m.depth_encoding},
          {"view_dirs", m.view_dirs},       {"background", detail::vec3_json(m.background)}};
}

ModelConfig model_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
  detail::check_keys(j,
                     {"feature_dim", "token_dim", "trunk_width", "latent_dim", "head_width", "proj_dim", "proj_hidden",
                      "recon_hidden", "n_coarse", "n_fine_extra", "activation", "depth_encoding", "view_dirs",
                      "background"},
                     "model config");
  ModelConfig m;
  detail::read_opt(j, "feature_dim", m.feature_dim);
  detail::read_opt(j, "token_dim", m.token_dim);
  detail::read_opt(j, "trunk_width", m.trunk_width);
  detail::read_opt(j, "latent_dim", m.latent_dim);
  detail::read_opt(j, "head_width", m.head_width);
  detail::read_opt(j, "proj_dim", m.proj_dim);
  detail::read_opt(j, "proj_hidden", m.proj_hidden);
  detail::read_opt(j, "recon_hidden", m.recon_hidden);
  detail::read_opt(j, "n_coarse", m.n_coarse);
  detail::read_opt(j, "n_fine_extra", m.n_fine_extra);
  std::string act = to_string(m.activation);
  detail::read_opt(j, "activation", act);
  m.activation = activation_from_string(act);
  detail::read_opt(j, "depth_encoding", m.depth_encoding);
  detail::read_opt(j, "view_dirs", m.view_dirs);
  if (j.contains("background")) m.background = detail::vec3_from(j.at("background"), "model.background");
  m.validate();
  return m;
}

json config_json(const TrainConfig& c) {
  return {{"total_iters", c.total_iters},
          {"batch_rays", c.batch_rays},
          {"lr", c.lr},
          {"lambda_base", c.lambda_base},
          {"mask_ratio", c.mask_ratio},
          {"tau", c.tau},
          {"mrvm_start_frac", c.mrvm_start_frac},
          {"warmup_iters", c.warmup_iters},
          {"ref_views", c.ref_views},
          {"seed", c.seed},
          {"mrvm_mode", to_string(c.mrvm_mode)},
          {"bbox_sampling", c.bbox_sampling},
          {"jitter", c.jitter},
          {"train_views", c.train_views},
          {"checkpoint_every", c.checkpoint_every},
          {"log_wallclock", c.log_wallclock},
          {"grad_clip", c.grad_clip},
          {"model", model_to_json(c.model)}};
}

TrainConfig config_from(const json& j) {
  if (!j.is_object()) throw InvalidArgument("train config must be a JSON object");
  detail::check_keys(j,
                     {"total_iters", "batch_rays", "lr", "lambda_base", "mask_ratio", "tau", "mrvm_start_frac",
                      "warmup_iters", "ref_views", "seed", "mrvm_mode", "bbox_sampling", "jitter", "train_views",
                      "checkpoint_every", "log_wallclock", "grad_clip", "model"},
                     "train config");
  TrainConfig c;
  detail::read_opt(j, "total_iters", c.total_iters);
  detail::read_opt(j, "batch_rays", c.batch_rays);
  detail::read_opt(j, "lr", c.lr);
  detail::read_opt(j, "lambda_base", c.lambda_base);
  detail::read_opt(j, "mask_ratio", c.mask_ratio);
  detail::read_opt(j, "tau", c.tau);
  detail::read_opt(j, "mrvm_start_frac", c.mrvm_start_frac);
  detail::read_opt(j, "warmup_iters", c.warmup_iters);
  detail::read_opt(j, "ref_views", c.ref_views);
  detail::read_opt(j, "seed", c.seed);
  std::string mode = to_string(c.mrvm_mode);
  detail::read_opt(j, "mrvm_mode", mode);
  c.mrvm_mode = mrvm_mode_from_string(mode);
  detail::read_opt(j, "bbox_sampling", c.bbox_sampling);
  detail::read_opt(j, "jitter", c.jitter);
  detail::read_opt(j, "train_views", c.train_views);
  detail::read_opt(j, "checkpoint_every", c.checkpoint_every);
  detail::read_opt(j, "log_wallclock", c.log_wallclock);
  detail::read_opt(j, "grad_clip", c.grad_clip);
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  c.validate();
  return c;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void add_moments(TrainState& s) {
  s.adam_m = diff::ParamStore(s.model.params.rng_seed());
  s.adam_v = diff::ParamStore(s.model.params.rng_seed());
  for (const auto& name : optimizer_params(s)) {
    const auto& p = s.model.params.at(name);
    s.adam_m.add(name, p.rows, p.cols);
    s.adam_v.add(name, p.rows, p.cols);
  }
}

void truncate_metrics(const std::filesystem::path& path, std::int64_t keep_below) {
  std::ifstream in(path);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoll(line.substr(0, comma)) < keep_below) kept += line + "\n";
  }
  in.close();
  if (header) kept = metrics_header();
  detail::write_text_file(path, kept);
}

}  // namespace

std::string to_string(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "finetune") return Phase::finetune;
  throw InvalidArgument("unknown phase '" + s + "' (pretrain|finetune)");
}

int TrainConfig::effective_warmup() const {
  return warmup_iters >= 0 ? warmup_iters : static_cast<int>(std::lround(0.1 * total_iters));
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw InvalidArgument("train config: " + msg); };
  if (total_iters < 0) bad("total_iters must be >= 0");
  if (batch_rays < 1) bad("batch_rays must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) bad("lr must be positive");
  if (!(lambda_base >= 0.0) || !std::isfinite(lambda_base)) bad("lambda_base must be >= 0");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) bad("mask_ratio must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) bad("tau must lie in [0, 1]");
  if (!(mrvm_start_frac >= 0.0 && mrvm_start_frac <= 1.0)) bad("mrvm_start_frac must lie in [0, 1]");
  if (ref_views < 1) bad("ref_views must be >= 1");
  if (train_views < 0) bad("train_views must be >= 0");
  if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  if (!(grad_clip > 0.0)) bad("grad_clip must be positive");
  model.validate();
}

std::string train_config_to_json(const TrainConfig& config) { return config_json(config).dump(2) + "\n"; }

TrainConfig train_config_from_json(const std::string& text) {
  return config_from(detail::parse_json(text, "train config"));
}

void apply_override(TrainConfig& config, const std::string& key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json j = config_json(config);
  if (key.rfind("model.", 0) == 0)
    j["model"][key.substr(6)] = parsed;
  else
    j[key] = parsed;
  config = config_from(j);
}

double lambda_schedule(int iter, const TrainConfig& config) {
  const double start = config.mrvm_start_frac * config.total_iters;
  const double it = iter;
  if (it < start) return 0.0;
  const int warmup = config.effective_warmup();
  if (warmup == 0) return config.lambda_base;
  return config.lambda_base * std::min(1.0, (it - start) / warmup);
}

std::vector<std::string> optimizer_params(const TrainState& state) {
  std::vector<std::string> out;
  for (const auto& name : state.model.params.names())
    if (!is_ema_target(name)) out.push_back(name);
  return out;
}

TrainState init_state(const TrainConfig& config, Phase phase) {
  config.validate();
  TrainState s;
  s.config = config;
  s.phase = phase;
  s.model = init_model(config.model, phase == Phase::pretrain ? config.mrvm_mode : MrvmMode::off, config.seed);
  add_moments(s);
  s.rng_state = rng_state_to_string(make_rng(config.seed, kMasterStream));
  return s;
}

TrainState finetune_from(const TrainState& pretrained, const TrainConfig& config) {
  TrainConfig c = config;
  c.model = pretrained.model.config;
  c.validate();
  TrainState s;
  s.config = c;
  s.phase = Phase::finetune;
  s.model = pretrained.model;
  strip_heads(s.model);
  add_moments(s);
  s.rng_state = rng_state_to_string(make_rng(c.seed, kMasterStream, 1));
  return s;
}

std::vector<int> training_views(const scene::Dataset& dataset, int train_views) {
  const auto& all = dataset.manifest.splits.train;
  if (all.empty()) throw DataError("dataset '" + dataset.manifest.scene_id + "' has no training views");
  if (train_views <= 0 || static_cast<std::size_t>(train_views) >= all.size()) return all;
  std::vector<int> out;
  const std::size_t n = all.size(), k = static_cast<std::size_t>(train_views);
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i * n / k]);
  return out;
}

StepMetrics train_step(TrainState& state, const std::vector<scene::Dataset>& corpus, int threads) {
  if (corpus.empty()) throw InvalidArgument("train_step: empty corpus");
  const TrainConfig& cfg = state.config;
  const int iter = static_cast<int>(state.iteration);
  Rng rng = rng_state_from_string(state.rng_state);
  const scene::Dataset& ds = corpus[uniform_index(rng, corpus.size())];
  const auto views = training_views(ds, cfg.train_views);
  const int target = views[uniform_index(rng, views.size())];
  const auto& camera = ds.manifest.cameras[static_cast<std::size_t>(target)];
  const auto ref_ids = render::nearest_views(ds.manifest.cameras, views, camera, cfg.ref_views, target);
  const auto refs = render::make_references(ds, ref_ids);

  std::vector<scene::Pixel> pixels;
  if (cfg.bbox_sampling) {
    pixels = scene::bbox_ray_filter(ds.manifest.bbox, camera, rng, cfg.batch_rays);
  } else {
    for (int i = 0; i < cfg.batch_rays; ++i) {
      const auto idx = uniform_index(rng, static_cast<std::uint64_t>(camera.width) * camera.height);
      pixels.push_back({static_cast<int>(idx % camera.width), static_cast<int>(idx / camera.width)});
    }
  }
  const Image& image = ds.images[static_cast<std::size_t>(target)];
  std::vector<geometry::Vec3> targets;
  for (const auto& p : pixels) targets.emplace_back(image.at(p.x, p.y, 0), image.at(p.x, p.y, 1), image.at(p.x, p.y, 2));
  state.rng_state = rng_state_to_string(rng);

  const bool pretrain = state.phase == Phase::pretrain && state.model.mode != MrvmMode::off;
  render::PassOptions opt;
  opt.jitter = cfg.jitter;
  opt.objective = pretrain ? state.model.mode : MrvmMode::off;
  opt.mask_ratio = pretrain ? cfg.mask_ratio : 0.0;
  opt.lambda = pretrain ? lambda_schedule(iter, cfg) : 0.0;
  opt.seed = cfg.seed;
  opt.stream = static_cast<std::uint64_t>(iter) + (state.phase == Phase::finetune ? (1ULL << 40) : 0);
  opt.compute_grad = true;
  opt.threads = threads;
  const auto rays = render::make_rays(camera, pixels, ds.manifest.bbox);
  const render::PassResult res = render::render_rays(state.model, refs, rays, targets, opt);

  StepMetrics m;
  m.iter = iter;
  m.lambda_eff = opt.lambda;
  m.degenerate_pairs = res.degenerate_pairs;
  const double n = static_cast<double>(pixels.size());
  double fine_sq = 0.0;
  for (std::size_t r = 0; r < pixels.size(); ++r) {
    m.l_nerf_c += res.nerf_coarse[r] / n;
    m.l_nerf_f += res.nerf_fine[r] / n;
    m.l_mrvm += res.latent[r] / n;
    fine_sq += res.nerf_fine[r];
  }
  const double mse = fine_sq / (3.0 * n);
  m.psnr_train_sample = std::isfinite(mse) ? metrics::psnr_from_mse(mse) : std::numeric_limits<double>::quiet_NaN();
  ++state.iteration;

  double norm_sq = 0.0;
  bool finite = std::isfinite(res.loss);
  for (std::size_t p = 0; p < state.model.params.size(); ++p) {
    if (is_ema_target(state.model.params.name(p))) continue;
    for (double g : res.grads[p]) {
      norm_sq += g * g;
      if (!std::isfinite(g)) finite = false;
    }
  }
  if (!finite || !std::isfinite(norm_sq)) {
    m.aborted = true;
    ++state.aborted_steps;
    std::fprintf(stderr, "[train] iteration %d: non-finite loss or gradient, step skipped\n", iter);
    return m;
  }
  const double norm = std::sqrt(norm_sq);
  double scale = 1.0;
  if (norm > cfg.grad_clip) {
    scale = cfg.grad_clip / norm;
    m.clipped = true;
    ++state.clip_events;
    std::fprintf(stderr, "[train] iteration %d: gradient norm %.4g clipped to %.4g\n", iter, norm, cfg.grad_clip);
  }

  ++state.adam_steps;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.adam_steps));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.adam_steps));
  auto& store = state.model.params;
  for (std::size_t p = 0; p < store.size(); ++p) {
    const std::string& name = store.name(p);
    if (is_ema_target(name)) continue;
    auto& w = store.param(p).data;
    auto& mom = state.adam_m.at(name).data;
    auto& vel = state.adam_v.at(name).data;
    const auto& g = res.grads[p];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * scale;
      mom[k] = kBeta1 * mom[k] + (1.0 - kBeta1) * gk;
      vel[k] = kBeta2 * vel[k] + (1.0 - kBeta2) * gk * gk;
      w[k] -= cfg.lr * (mom[k] / bc1) / (std::sqrt(vel[k] / bc2) + kAdamEps);
    }
  }
  if (state.phase == Phase::pretrain && state.model.mode != MrvmMode::off) {
    objective::ema_update(store, objective::kTargetProj, objective::kOnlineProj, cfg.tau);
    if (state.model.mode == MrvmMode::featmask2)
      objective::ema_update(store, objective::kFineTarget, "fine.", cfg.tau);
  }
  return m;
}

std::string metrics_header() { return "iter,L_nerf_c,L_nerf_f,L_mrvm,lambda_eff,psnr_train_sample,wallclock_s\n"; }

std::string metrics_row(const StepMetrics& m) {
  return std::to_string(m.iter) + "," + fmt(m.l_nerf_c) + "," + fmt(m.l_nerf_f) + "," + fmt(m.l_mrvm) + "," +
         fmt(m.lambda_eff) + "," + fmt(m.psnr_train_sample) + "," + fmt(m.wallclock_s) + "\n";
}

TrainState run(TrainState state, const std::vector<scene::Dataset>& corpus, const RunOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);
  const fs::path metrics_path = options.out_dir / kMetricsFile;
  const fs::path ckpt_path = options.out_dir / kCheckpointFile;
  if (options.resume && fs::exists(ckpt_path)) {
    state = load_checkpoint(ckpt_path);
    truncate_metrics(metrics_path, state.iteration);
  } else {
    detail::write_text_file(metrics_path, metrics_header());
  }
  std::ofstream out(metrics_path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + metrics_path.string());
  const auto t0 = std::chrono::steady_clock::now();
  int done = 0;
  while (state.iteration < state.config.total_iters) {
    if (options.stop_after > 0 && done >= options.stop_after) return state;
    StepMetrics m = train_step(state, corpus, options.threads);
    if (state.config.log_wallclock)
      m.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << metrics_row(m);
    out.flush();
    ++done;
    if (options.on_step) options.on_step(m);
    if (state.config.checkpoint_every > 0 && state.iteration % state.config.checkpoint_every == 0 &&
        state.iteration < state.config.total_iters)
      save_checkpoint(ckpt_path, state);
  }
  save_checkpoint(ckpt_path, state);
  return state;
}

}  // namespace mrvm::train
