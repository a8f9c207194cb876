// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one [PASS]/[FAIL] line per criterion. Each criterion
// also enforces its wall-clock budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "mrvm/experiments.hpp"
#include "mrvm/gradcheck.hpp"
#include "mrvm/masking.hpp"
#include "mrvm/mrvm.h"
#include "mrvm/objective.hpp"
#include "mrvm/renderer.hpp"
#include "mrvm/sampler.hpp"
#include "mrvm/scenegen.hpp"
#include "mrvm/trainer.hpp"
#include "stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrvm;
using render::Vec3;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  int threads = 1;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Outcome(const Context&)> run;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void check(mrvm_status st, const std::string& what) {
  if (st != MRVM_OK) throw std::runtime_error(what + ": " + mrvm_last_error());
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mrvm_string_free(s);
  return out;
}

fs::path fresh(const Context& ctx, const std::string& name) {
  const fs::path d = ctx.work / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Generates `count` scenes through the public API and returns their directories.
std::vector<std::string> gen_corpus(const fs::path& dir, const json& gen, int count, std::uint64_t seed) {
  char* summary = nullptr;
  check(mrvm_gen_scenes(gen.dump().c_str(), dir.c_str(), count, seed, 1, 1, &summary), "gen-scenes");
  std::vector<std::string> out;
  const json parsed = json::parse(take(summary));
  for (const auto& s : parsed["scenes"]) out.push_back(s["dir"].get<std::string>());
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

struct Config {
  mrvm_config* c = nullptr;
  explicit Config(const std::map<std::string, std::string>& sets = {}) {
    check(mrvm_config_new(&c), "config");
    for (const auto& [k, v] : sets) check(mrvm_config_set(c, k.c_str(), v.c_str()), "config " + k);
  }
  ~Config() { mrvm_config_free(c); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
};

/// Every regular file below `a` has a byte-identical twin below `b`, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b, std::string& first_diff) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    first_diff = "file lists differ";
    return false;
  }
  for (const auto& rel : fa)
    if (slurp(a / rel) != slurp(b / rel)) {
      first_diff = rel.string();
      return false;
    }
  return true;
}

// 1
Outcome renderer_oracle(const Context&) {
  scene::GenConfig gen;
  Rng rng = make_rng(2026, 0xACC1);
  const auto cams = scene::orbit_cameras(gen, 16);
  double worst = 0.0;
  int rays = 0;
  for (int s = 0; s < 50; ++s) {
    const scene::SceneSpec spec = scene::sample_scene(rng, gen);
    for (int r = 0; r < 100;) {
      const auto& cam = cams[uniform_index(rng, cams.size())];
      const auto ray = scene::pixel_ray_in_box(cam, spec.bbox, uniform(rng, 0, gen.width), uniform(rng, 0, gen.height));
      if (!ray) continue;
      const Vec3 exact = scene::oracle_render(spec, *ray);
      const Vec3 approx = render::quadrature_render(spec, *ray, 100000);
      worst = std::max(worst, (exact - approx).cwiseAbs().maxCoeff());
      ++r;
      ++rays;
    }
  }
  return {worst <= 1e-3, "max channel error " + num(worst) + " over " + std::to_string(rays) + " rays (tol 1e-3)"};
}

// 2
Outcome gradient_integrity(const Context&) {
  const auto entries = gradcheck::check_all(2026);
  double worst = 0.0;
  std::string worst_name, failed;
  bool saw_pipeline = false, saw_latent = false;
  for (const auto& e : entries) {
    if (e.report.max_rel_error >= worst) {
      worst = e.report.max_rel_error;
      worst_name = e.name;
    }
    if (!e.passed()) failed += " " + e.name;
    saw_pipeline |= e.name.find("pipeline") != std::string::npos;
    saw_latent |= e.name.find("[default]") != std::string::npos;
  }
  const bool ok = failed.empty() && saw_pipeline && saw_latent;
  return {ok, std::to_string(entries.size()) + " checks, worst relative error " + num(worst) + " (" + worst_name + ")" +
                  (failed.empty() ? "" : ", failed:" + failed)};
}

// 3
Outcome compositing_identity(const Context&) {
  Rng rng = make_rng(2026, 0xACC3);
  double worst = 0.0;
  bool background_exact = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 192);
    std::vector<double> s(n), d(n);
    std::vector<Vec3> c(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      s[i] = u < 0.2 ? 0.0 : (u < 0.25 ? 1e4 : std::exp(uniform(rng, -8, 6)));
      d[i] = uniform(rng, 0.0, 0.1);
      c[i] = Vec3(uniform01(rng), uniform01(rng), uniform01(rng));
    }
    const Vec3 bg(uniform01(rng), uniform01(rng), uniform01(rng));
    const auto out = render::composite(s, c, d, bg);
    worst = std::max(worst, std::abs(std::accumulate(out.weights.begin(), out.weights.end(), 0.0) + out.residual - 1.0));
    const auto empty = render::composite(std::vector<double>(n, 0.0), c, d, bg);
    background_exact &= empty.color == bg && empty.residual == 1.0;
  }

  const auto toy = testing::make_toy_scene(33, 16, 6);
  const auto refs = toy.refs({0, 1, 2});
  Rng prng(5);
  auto pixels = scene::bbox_ray_filter(toy.spec, toy.cameras[4], prng, 48);
  pixels.push_back({0, 0});
  pixels.push_back({15, 0});
  const auto rays = render::make_rays(toy.cameras[4], pixels, toy.spec.bbox);
  std::vector<Vec3> targets(pixels.size(), Vec3::Constant(0.5));
  std::size_t pass_rays = 0;
  for (MrvmMode mode : {MrvmMode::off, MrvmMode::standard, MrvmMode::featmask1, MrvmMode::featmask2}) {
    const Model model = init_model(ModelConfig{}, mode, 7);
    render::PassOptions opt;
    opt.objective = mode;
    opt.mask_ratio = mode == MrvmMode::off ? 0.0 : 0.5;
    opt.jitter = true;
    const auto res = render::render_rays(model, refs, rays, targets, opt);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      worst = std::max({worst, std::abs(res.mass_coarse[i] - 1.0), std::abs(res.mass_fine[i] - 1.0)});
      if (!rays.hit[i])
        background_exact &= res.color_fine[i] == model.config.background && res.color_coarse[i] == model.config.background;
      ++pass_rays;
    }
  }
  background_exact &= scene::oracle_render(scene::SceneSpec{}, *scene::pixel_ray_in_box(
                                                                    toy.cameras[0], toy.spec.bbox, 8, 8)) ==
                      scene::SceneSpec{}.background;
  return {worst <= 1e-9 && background_exact,
          "max |sum w + T - 1| " + num(worst) + " over 10000 composites and " + std::to_string(pass_rays) +
              " model rays; empty rays give background exactly: " + (background_exact ? "yes" : "no")};
}

// 4
Outcome loss_algebra(const Context&) {
  Rng rng = make_rng(2026, 0xACC4);
  constexpr std::size_t kPairs = 10000, kDim = 32;
  diff::Tensor a(kPairs, kDim), b(kPairs, kDim);
  for (auto& v : a.values()) v = uniform(rng, -1, 1);
  for (auto& v : b.values()) v = uniform(rng, -1, 1);
  diff::Tape tape;
  const auto loss = objective::alignment_loss(tape.constant(a), tape.constant(b), 1);
  double worst = 0.0, lo = 4.0, hi = 0.0;
  for (std::size_t i = 0; i < kPairs; ++i) {
    double na = 0, nb = 0, ab = 0;
    for (std::size_t k = 0; k < kDim; ++k) {
      na += a(i, k) * a(i, k);
      nb += b(i, k) * b(i, k);
      ab += a(i, k) * b(i, k);
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double l2 = 0;
    for (std::size_t k = 0; k < kDim; ++k) {
      const double d = a(i, k) / na - b(i, k) / nb;
      l2 += d * d;
    }
    const double cosine = 2.0 - 2.0 * ab / (na * nb);
    const double v = loss.per_ray.value()(i, 0);
    worst = std::max({worst, std::abs(v - l2), std::abs(v - cosine), std::abs(l2 - cosine)});
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double end_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    diff::Tensor x(1, kDim), kx(1, kDim), negx(1, kDim);
    const double scale = std::exp(uniform(rng, -5, 5));
    for (std::size_t k = 0; k < kDim; ++k) {
      x(0, k) = uniform(rng, -1, 1);
      kx(0, k) = scale * x(0, k);
      negx(0, k) = -scale * x(0, k);
    }
    diff::Tape t2;
    const double zero = objective::alignment_loss(t2.constant(x), t2.constant(kx), 1).per_ray.value()[0];
    const double four = objective::alignment_loss(t2.constant(x), t2.constant(negx), 1).per_ray.value()[0];
    end_err = std::max({end_err, std::abs(zero), std::abs(four - 4.0)});
  }
  const bool ok = worst <= 1e-12 && lo >= 0.0 && hi <= 4.0 && end_err <= 1e-12;
  return {ok, "max formula gap " + num(worst) + " on 10000 pairs, range [" + num(lo) + ", " + num(hi) +
                  "], aligned/antipodal endpoint error " + num(end_err)};
}

// 5
Outcome ema_closed_form(const Context&) {
  Rng rng = make_rng(2026, 0xACC5);
  double worst = 0.0;
  std::size_t elements = 0;
  for (MrvmMode mode : {MrvmMode::standard, MrvmMode::featmask2}) {
    diff::ParamStore s = init_model(ModelConfig{}, mode, 3).params;
    const bool fm2 = mode == MrvmMode::featmask2;
    const std::string tgt = fm2 ? objective::kFineTarget : objective::kTargetProj;
    const std::string onl = fm2 ? "fine." : objective::kOnlineProj;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.name(i).rfind(tgt, 0) == 0)
        for (auto& v : s.param(i).data) v = uniform(rng, -3, 3);
    const diff::ParamStore start = s;
    for (int n = 1; n <= 1000; ++n) {
      objective::ema_update(s, tgt, onl, 0.99);
      const double decay = std::pow(0.99, n);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string& name = s.name(i);
        if (name.rfind(tgt, 0) != 0) continue;
        const auto& theta = start.at(onl + name.substr(tgt.size())).data;
        const auto& big0 = start.param(i).data;
        for (std::size_t k = 0; k < theta.size(); ++k) {
          worst = std::max(worst, std::abs(s.param(i).data[k] - (theta[k] + decay * (big0[k] - theta[k]))));
          if (n == 1) ++elements;
        }
      }
    }
  }
  return {worst <= 1e-12 && elements > 0,
          "max deviation " + num(worst) + " over 1000 steps on " + std::to_string(elements) + " target weights"};
}

// 6
Outcome masking_statistics(const Context&) {
  constexpr int kPlans = 10000;
  Rng rng = make_rng(2026, 0xACC6);
  std::vector<double> per_point(96, 0.0), view_counts(3, 0.0);
  bool exact = true;
  for (int i = 0; i < kPlans; ++i) {
    const auto p = masking::sample_mask_plan(96, 3, 0.5, rng);
    exact &= p.masked_points.size() == 48;
    for (std::size_t k = 0; k < p.masked_points.size(); ++k) {
      per_point[p.masked_points[k]] += 1.0;
      view_counts[p.masked_views[k].size() - 1] += 1.0;
    }
  }
  const double sigma = std::sqrt(0.25 / kPlans);
  double worst_z = 0.0, sum_z2 = 0.0;
  for (double c : per_point) {
    const double z = (c / kPlans - 0.5) / sigma;
    worst_z = std::max(worst_z, std::abs(z));
    sum_z2 += z * z;
  }
  // Fixed-size subsets: the rescaled sum is chi2 with n - 1 dof.
  const double joint = sum_z2 * 95.0 / 96.0;
  const double total = std::accumulate(view_counts.begin(), view_counts.end(), 0.0);
  const double chi2 = testing::chi_square(view_counts, std::vector<double>(3, total / 3.0));
  const bool ok = exact && worst_z <= 3.0 && joint < testing::kChi2Crit99Df95 && chi2 < testing::kChi2Crit99Df2;
  return {ok, std::string("48 masked points in every plan: ") + (exact ? "yes" : "no") + ", worst per-point z " +
                  num(worst_z) + " (limit 3), joint per-point chi2 " + num(joint) + " (crit " +
                  num(testing::kChi2Crit99Df95) + "), view-count chi2 " + num(chi2) + " (crit " +
                  num(testing::kChi2Crit99Df2) + ")"};
}

// 7
Outcome importance_fidelity(const Context&) {
  Rng rng = make_rng(2026, 0xACC7);
  std::vector<double> w(64);
  for (double& v : w) v = uniform01(rng);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const auto coarse = sampler::stratified(0.0, 1.0, 64, nullptr, false);
  const auto draws = sampler::importance(coarse, w, 100000, rng);
  std::vector<double> observed(64, 0.0), expected(64);
  for (double t : draws) observed[std::min<std::size_t>(63, static_cast<std::size_t>(t * 64))] += 1.0;
  for (std::size_t i = 0; i < 64; ++i) expected[i] = 1e5 * w[i] / total;
  const double chi2 = testing::chi_square(observed, expected);

  std::size_t outside = 0;
  for (std::size_t k = 0; k < 64; ++k) {
    std::vector<double> delta(64, 0.0);
    delta[k] = 1.0;
    for (double t : sampler::importance(coarse, delta, 2000, rng))
      outside += !(t >= static_cast<double>(k) / 64 && t <= static_cast<double>(k + 1) / 64);
  }
  const bool ok = chi2 < testing::kChi2Crit99Df63 && outside == 0;
  return {ok, "chi2 " + num(chi2) + " (crit " + num(testing::kChi2Crit99Df63) + ", 63 dof), delta draws outside target bin " +
                  std::to_string(outside) + " of 128000"};
}

// 8
Outcome schedule_contract(const Context&) {
  train::TrainConfig defaults;
  bool ok = defaults.lambda_base == 0.1 && defaults.mrvm_start_frac == 0.1;
  double worst = 0.0;
  int points = 0;
  struct Case {
    int total, warmup, stride;
  };
  for (const Case cs : {Case{1000, -1, 1}, Case{20000, 2000, 20}, Case{5000, 0, 5}}) {
    train::TrainConfig c;
    c.total_iters = cs.total;
    c.warmup_iters = cs.warmup;
    const double start = 0.1 * cs.total;
    const double warm = cs.warmup < 0 ? 0.1 * cs.total : cs.warmup;
    double last = 0.0;
    for (int g = 0; g < 1000; ++g) {
      const int it = g * cs.stride;
      double expect;
      if (it < start)
        expect = 0.0;
      else if (warm == 0.0 || it >= start + warm)
        expect = 0.1;
      else
        expect = 0.1 * (it - start) / warm;
      const double got = train::lambda_schedule(it, c);
      worst = std::max(worst, std::abs(got - expect));
      ok &= got >= last;
      last = got;
      ++points;
    }
  }
  ok &= worst <= 1e-15;
  return {ok, "max deviation " + num(worst) + " at " + std::to_string(points) + " grid points, monotone: " +
                  (ok ? "yes" : "see deviation")};
}

// 9
Outcome determinism(const Context& ctx) {
  const fs::path dir = fresh(ctx, "c09");
  const auto scenes = gen_corpus(dir / "data", {{"width", 32}, {"height", 32}, {"train_views", 10}, {"test_views", 2}}, 2, 9);
  const auto ptrs = c_strings(scenes);
  Config cfg({{"total_iters", "40"}, {"seed", "9"}, {"checkpoint_every", "20"}});
  std::vector<fs::path> runs;
  for (int threads : {1, 1, 4, 4}) {
    const fs::path out = dir / ("run_" + std::to_string(runs.size()) + "_t" + std::to_string(threads));
    char* summary = nullptr;
    check(mrvm_train(cfg.c, "pretrain", ptrs.data(), ptrs.size(), nullptr, out.c_str(), 0, threads, &summary), "train");
    mrvm_string_free(summary);
    runs.push_back(out);
  }
  bool ok = true;
  std::string detail;
  const std::string metrics = slurp(runs[0] / train::kMetricsFile), ckpt = slurp(runs[0] / train::kCheckpointFile);
  ok &= std::count(metrics.begin(), metrics.end(), '\n') == 41 && !ckpt.empty();
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const bool same = slurp(runs[i] / train::kMetricsFile) == metrics && slurp(runs[i] / train::kCheckpointFile) == ckpt;
    if (!same) detail += " " + runs[i].filename().string() + " differs;";
    ok &= same;
  }
  return {ok, "4 pretrain runs (1,1,4,4 threads, 40 iterations): metrics.csv and checkpoint.bin " +
                  std::string(ok ? "bit-identical" : "differ:" + detail)};
}

// 10
Outcome single_scene(const Context& ctx) {
  const fs::path dir = fresh(ctx, "c10");
  const auto scenes = gen_corpus(dir / "data", json::object(), 1, 1);
  const auto ptrs = c_strings(scenes);
  Config cfg({{"total_iters", "2000"}, {"ref_views", "3"}});
  char* summary = nullptr;
  check(mrvm_train(cfg.c, "finetune", ptrs.data(), 1, nullptr, (dir / "run").c_str(), 0, ctx.threads, &summary),
        "finetune");
  mrvm_string_free(summary);
  mrvm_model* model = nullptr;
  check(mrvm_model_load((dir / "run" / train::kCheckpointFile).c_str(), &model), "load");
  char* report = nullptr;
  const mrvm_status st = mrvm_model_evaluate(model, ptrs.data(), 1, (dir / "eval").c_str(), ctx.threads, &report);
  mrvm_model_free(model);
  check(st, "evaluate");
  const json r = json::parse(take(report))[0];
  std::string views;
  double best = 0.0;
  for (const auto& v : r["views"]) {
    views += " " + num(v["psnr"].get<double>());
    best = std::max(best, v["psnr"].get<double>());
  }
  const double mean = r["mean_psnr"].get<double>();
  return {mean >= 25.0, "held-out view PSNR" + views + " dB, mean " + num(mean) + " dB (need >= 25 on the mean)"};
}

// 11
Outcome directional_benefit(const Context& ctx) {
  const fs::path dir = fresh(ctx, "c11");
  const auto scenes = gen_corpus(dir / "data", {{"train_views", 20}, {"test_views", 4}}, 10, 11);
  std::vector<fs::path> paths(scenes.begin(), scenes.end());
  const auto all = exp::load_corpus(paths);
  const std::vector<scene::Dataset> train(all.begin(), all.begin() + 8), held(all.begin() + 8, all.end());

  constexpr int kPretrain = 1000, kFinetune = 500;
  std::vector<double> mrvm_psnr, base_psnr;
  std::string table = "seed,mrvm_psnr,baseline_psnr,difference\n";
  std::printf("  seed | MRVM PSNR | baseline PSNR | difference\n");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    double arm[2];
    for (int k = 0; k < 2; ++k) {
      train::TrainConfig pre;
      pre.total_iters = kPretrain;
      pre.seed = seed;
      pre.mrvm_mode = k == 0 ? MrvmMode::standard : MrvmMode::off;
      train::TrainConfig fine = pre;
      fine.total_iters = kFinetune;
      fine.mrvm_mode = MrvmMode::off;
      const auto res = exp::pretrain_finetune_eval(pre, fine, train, held,
                                                   dir / ((k == 0 ? "mrvm_seed" : "base_seed") + std::to_string(seed)),
                                                   ctx.threads);
      arm[k] = res.mean_psnr;
    }
    mrvm_psnr.push_back(arm[0]);
    base_psnr.push_back(arm[1]);
    table += std::to_string(seed) + "," + num(arm[0], 6) + "," + num(arm[1], 6) + "," + num(arm[0] - arm[1], 6) + "\n";
    std::printf("  %4llu | %9.3f | %13.3f | %+10.3f\n", static_cast<unsigned long long>(seed), arm[0], arm[1],
                arm[0] - arm[1]);
    std::fflush(stdout);
  }
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  std::vector<double> diff(5);
  for (std::size_t i = 0; i < 5; ++i) diff[i] = mrvm_psnr[i] - base_psnr[i];
  const double md = mean(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - md) * (d - md);
  const double sd = std::sqrt(ss / 4.0);
  const double dz = sd > 0.0 ? md / sd : 0.0;
  std::ofstream(dir / "per_seed.csv") << table;
  const double m = mean(mrvm_psnr), b = mean(base_psnr);
  return {m >= b, "mean held-out PSNR MRVM " + num(m, 5) + " dB vs baseline " + num(b, 5) + " dB, difference " +
                      num(md, 3) + " dB, paired effect size d_z " + num(dz, 3) + " (table in " +
                      (dir / "per_seed.csv").string() + ")"};
}

// 12
Outcome ablation_harness(const Context& ctx) {
  const fs::path dir = fresh(ctx, "c12");
  const auto scenes = gen_corpus(dir / "data", {{"width", 32}, {"height", 32}, {"train_views", 50}, {"test_views", 4}}, 4, 12);
  const std::vector<std::string> train_dirs(scenes.begin(), scenes.begin() + 3), held_dirs(scenes.begin() + 3, scenes.end());
  const auto train = c_strings(train_dirs);
  const auto held = c_strings(held_dirs);
  Config pre({{"total_iters", "200"}, {"seed", "12"}});
  Config fine({{"total_iters", "100"}, {"seed", "12"}});
  const std::vector<double> ratios = {0.1, 0.25, 0.5, 0.75, 0.9};
  const std::vector<int> views = {50, 20, 10}, refs = {5, 4, 3};

  std::vector<fs::path> outs;
  std::string mask_csv, shot_csv;
  for (int threads : {1, 4}) {
    const fs::path out = dir / ("threads_" + std::to_string(threads));
    char* csv = nullptr;
    check(mrvm_ablate_mask(pre.c, fine.c, ratios.data(), ratios.size(), train.data(), train.size(), held.data(),
                           held.size(), (out / "mask").c_str(), threads, &csv),
          "ablate-mask");
    mask_csv = take(csv);
    check(mrvm_ablate_fewshot(pre.c, fine.c, views.data(), refs.data(), views.size(), train.data(), train.size(),
                              held.data(), held.size(), (out / "fewshot").c_str(), threads, &csv),
          "ablate-fewshot");
    shot_csv = take(csv);
    outs.push_back(out);
  }
  const auto rows = [](const std::string& csv) { return std::count(csv.begin(), csv.end(), '\n') - 1; };
  bool complete = rows(mask_csv) == 5 && rows(shot_csv) == 3 &&
                  slurp(outs[1] / "mask" / "ablate_mask.csv") == mask_csv &&
                  slurp(outs[1] / "fewshot" / "ablate_fewshot.csv") == shot_csv;
  for (const std::string& csv : {mask_csv, shot_csv})
    complete &= csv.find("nan") == std::string::npos && csv.find("inf") == std::string::npos;
  std::string where;
  const bool same = same_tree(outs[0], outs[1], where);
  std::printf("  ablate_mask.csv:\n%s  ablate_fewshot.csv:\n%s", mask_csv.c_str(), shot_csv.c_str());
  return {complete && same, std::string("5 mask ratios and 3 view settings completed: ") + (complete ? "yes" : "no") +
                                ", outputs at 1 and 4 threads bit-identical: " + (same ? "yes" : "no (" + where + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrvm acceptance suite"};
  std::vector<int> only;
  Context ctx;
  std::string work = (fs::temp_directory_path() / "mrvm_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--threads", ctx.threads, "Worker threads for training and evaluation");
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  fs::create_directories(ctx.work);

  const std::vector<Criterion> all = {
      {1, "renderer matches the analytic oracle", 120, renderer_oracle},
      {2, "gradient integrity", 120, gradient_integrity},
      {3, "compositing identity", 120, compositing_identity},
      {4, "loss algebra", 120, loss_algebra},
      {5, "ema closed form", 120, ema_closed_form},
      {6, "masking statistics", 120, masking_statistics},
      {7, "importance sampling fidelity", 120, importance_fidelity},
      {8, "latent weight schedule", 120, schedule_contract},
      {9, "determinism across runs and threads", 600, determinism},
      {10, "single-scene fit", 15 * 60, single_scene},
      {11, "directional benefit of masked pretraining", 90 * 60, directional_benefit},
      {12, "ablation harness", 3 * 3600, ablation_harness},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("[%s] %2d %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
