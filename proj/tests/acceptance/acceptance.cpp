// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fuselab/error.hpp"
#include "fuselab/eval.hpp"
#include "fuselab/experiment.hpp"
#include "fuselab/fd_check.hpp"
#include "fuselab/geometry.hpp"
#include "fuselab/io.hpp"
#include "fuselab/objective.hpp"
#include "fuselab/synthworld.hpp"
#include "fuselab/train.hpp"

using namespace fuselab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  %2d  %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

// ---- 1. gradients

/// Identity shifted by half a cell: bilinear sample points sit at cell
/// midpoints, away from the kinks where finite differences break down.
FactorizedFusionParams midcell_params(std::mt19937_64& rng, const GridShape& g, const std::vector<ViewPair>& pairs) {
  std::normal_distribution<double> n(0.0, 0.02);
  FactorizedFusionParams p = make_factorized(g, pairs, rng(), 0.5, 0.0);
  p.init_thetas.resize(0, 0);
  for (auto& [pair, t] : p.thetas) {
    for (int i = 0; i < g.cells(); ++i) {
      Theta th = identity_theta();
      th(2) = 1.0 / (g.w - 1);
      th(5) = 1.0 / (g.h - 1);
      for (int k = 0; k < 6; ++k) t(i, k) = th(k) + n(rng);
    }
  }
  return p;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  WorldConfig w;
  w.n_cams = 4;
  w.n_test_cams = 2;
  w.grid = {8, 8};
  w.n_joints = 3;
  w.heatmap_sigma = 1.0;
  w.seed = 3;
  const Rig rig = make_world_rig(w);
  std::mt19937_64 rng(17);
  const std::vector<ViewPair> pairs = ordered_pairs({0, 1});
  const auto batch = generate_samples(rig, {0, 1}, 3, w, w.seed, 1);

  double loss_err = 0.0;
  for (bool softmax : {false, true}) {
    const LossConfig lc{softmax, 0.2};
    const FusionParams params = midcell_params(rng, w.grid, pairs);
    const LossAndGrad lg = loss_and_grad(params, batch, lc);
    const auto f = [&](const Eigen::VectorXd& x) {
      FusionParams q = params;
      unflatten(q, x);
      return loss_value(q, stack_batch(batch), lc);
    };
    loss_err = std::max(loss_err, fd_check(f, flatten(params), flatten(lg.grad, params), 1e-5).max_rel_error);

    DenseFusionParams dense = make_dense(w.grid, pairs);
    std::normal_distribution<double> n(0.0, 0.01);
    for (auto& [pair, m] : dense.weights) m = m.unaryExpr([&](double) { return n(rng); });
    const FusionParams dp = dense;
    const LossAndGrad dg = loss_and_grad(dp, batch, lc);
    const auto fd = [&](const Eigen::VectorXd& x) {
      FusionParams q = dp;
      unflatten(q, x);
      return loss_value(q, stack_batch(batch), lc);
    };
    loss_err = std::max(loss_err, fd_check(fd, flatten(dp), flatten(dg.grad, dp), 1e-5, 600, 5).max_rel_error);
  }

  // second-order meta-gradient; alpha large enough for the Hessian term to matter
  Task task;
  task.pair = {0, 1};
  task.train_split = generate_samples(rig, {0, 1}, 2, w, w.seed, 2);
  task.test_split = generate_samples(rig, {0, 1}, 2, w, w.seed, 3);
  const FactorizedFusionParams mp = midcell_params(rng, w.grid, pairs);
  const double alpha = 0.05;
  const FusionParams wrapped = mp;
  const LossAndGrad second = meta_grad(mp, task, alpha);
  const LossAndGrad first = meta_grad(mp, task, alpha, {true, {}});
  const auto fm = [&](const Eigen::VectorXd& x) {
    FusionParams q = mp;
    unflatten(q, x);
    return meta_objective(std::get<FactorizedFusionParams>(q), task, alpha);
  };
  const Eigen::VectorXd g2 = flatten(second.grad, wrapped);
  const double meta_err = fd_check(fm, flatten(wrapped), g2, 1e-5).max_rel_error;
  const double hessian_share = (flatten(first.grad, wrapped) - g2).norm() / g2.norm();
  const double secs = seconds_since(t0);
  return {loss_err < 1e-4 && meta_err < 1e-3 && secs < 60.0,
          fmt("max rel err loss %.2e (< 1e-4), meta %.2e (< 1e-3), second-order share %.2f, %.1f s (< 60)", loss_err,
              meta_err, hessian_share, secs)};
}

// ---- 2. geometry

Outcome geometric_soundness() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  double worst_residual = 0.0, worst_tri = 0.0;
  int draws = 0;
  WorldConfig w;
  for (int r = 0; draws < 10000; ++r) {
    const Rig rig = make_dome_rig(8, 2.0 + 0.25 * (r % 8), 1000 + r, w.effective_focal(), w.grid);
    for (int k = 0; k < 100; ++k, ++draws) {
      const int a = static_cast<int>(rng() % 8);
      int b = static_cast<int>(rng() % 7);
      if (b >= a) ++b;
      const Point3 p(u(rng), u(rng), u(rng));
      const Pixel x1 = project(rig.cameras[a], p);
      const Pixel x2 = project(rig.cameras[b], p);
      const FundamentalMatrix f = fundamental_from_cameras(rig.cameras[a], rig.cameras[b]);
      worst_residual = std::max(worst_residual, std::abs(x2.homogeneous().dot(f.m * x1.homogeneous())));
      const Camera cams[2] = {rig.cameras[a], rig.cameras[b]};
      const Pixel px[2] = {x1, x2};
      worst_tri = std::max(worst_tri, (triangulate_dlt(cams, px) - p).norm());
    }
  }
  return {worst_residual < 1e-7 && worst_tri < 1e-6,
          fmt("%d draws: max |x2'Fx1| %.2e (< 1e-7), max triangulation error %.2e (< 1e-6)", draws, worst_residual,
              worst_tri)};
}

// ---- 3. factorization

/// Factorized weight written out: bilinear read of the base at the affinely mapped
/// position of each source cell.
double oracle_weight(const Heatmap& base, const Eigen::MatrixXd& thetas, int i, int j, const GridShape& g) {
  const double gx = -1.0 + 2.0 * (j % g.w) / (g.w - 1);
  const double gy = -1.0 + 2.0 * (j / g.w) / (g.h - 1);
  const double sx = thetas(i, 0) * gx + thetas(i, 1) * gy + thetas(i, 2);
  const double sy = thetas(i, 3) * gx + thetas(i, 4) * gy + thetas(i, 5);
  const double x = (sx + 1.0) / 2.0 * (g.w - 1);
  const double y = (sy + 1.0) / 2.0 * (g.h - 1);
  double v = 0.0;
  for (int yy = static_cast<int>(std::floor(y)); yy <= static_cast<int>(std::floor(y)) + 1; ++yy) {
    for (int xx = static_cast<int>(std::floor(x)); xx <= static_cast<int>(std::floor(x)) + 1; ++xx) {
      if (xx < 0 || yy < 0 || xx >= g.w || yy >= g.h) continue;
      v += (1.0 - std::abs(x - xx)) * (1.0 - std::abs(y - yy)) * base(yy, xx);
    }
  }
  return v;
}

Outcome factorization_equivalence() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  int instances = 0;
  for (const GridShape g : {GridShape{5, 7}, GridShape{8, 8}, GridShape{12, 9}}) {
    for (int trial = 0; trial < 4; ++trial, ++instances) {
      const std::vector<int> cams{0, 1, 2};
      FactorizedFusionParams fac = make_factorized(g, ordered_pairs(cams), rng(), 1.0, 0.3);
      MultiViewSample s;
      s.grid = g;
      s.cameras = cams;
      for (int v = 0; v < 3; ++v) {
        HeatmapStack st(g.cells(), 2);
        for (Eigen::Index k = 0; k < st.size(); ++k) st.data()[k] = n(rng);
        s.views.push_back(st);
      }
      const MultiViewSample fused = fuse_multiview(s, fac);
      // out_i = target_i + sum_j w_ij source_j, one cell at a time
      for (int a = 0; a < 3; ++a) {
        for (int jt = 0; jt < 2; ++jt) {
          for (int i = 0; i < g.cells(); ++i) {
            double out = s.views[a](i, jt);
            for (int b = 0; b < 3; ++b) {
              if (a == b) continue;
              const Eigen::MatrixXd& th = fac.thetas.at({a, b});
              for (int j = 0; j < g.cells(); ++j) out += oracle_weight(fac.base, th, i, j, g) * s.views[b](j, jt);
            }
            worst = std::max(worst, std::abs(out - fused.views[a](i, jt)));
          }
        }
      }
    }
  }
  return {worst < 1e-9, fmt("%d random instances, max |factorized - dense| %.2e (< 1e-9)", instances, worst)};
}

// ---- 4. parameter counts

Outcome parameter_counts() {
  const GridShape g{64, 64};
  const std::int64_t dense = param_count(FusionKind::Dense, g, 1);
  const std::int64_t fac = param_count(FusionKind::Factorized, g, 1);
  const std::int64_t ft = finetune_param_count(g);

  // the same numbers from real containers
  const FactorizedFusionParams p = make_factorized(g, {{0, 1}}, 1);
  FusionParams wrapped = p;
  const Eigen::Index fac_flat = flatten(wrapped, {true, false, true}).size();
  const Eigen::Index ft_flat = flatten(wrapped, {false, false, true}).size();
  const DenseFusionParams d = make_dense(g, {{0, 1}});
  const std::int64_t dense_real = d.weights.at({0, 1}).size();

  const bool ok = dense == 16777216 && fac == 28672 && ft == 24576 && fac_flat == fac && ft_flat == ft &&
                  dense_real == dense;
  return {ok, fmt("64x64: dense %lld, factorized %lld, finetune %lld (containers: %lld, %lld, %lld)",
                  static_cast<long long>(dense), static_cast<long long>(fac), static_cast<long long>(ft),
                  static_cast<long long>(dense_real), static_cast<long long>(fac_flat),
                  static_cast<long long>(ft_flat))};
}

// ---- 5. point-mass task distribution

Outcome point_mass_reduction() {
  const auto t0 = Clock::now();
  WorldConfig w;
  w.seed = 4;
  const Rig rig = make_world_rig(w);
  const Rig train_rig = sub_rig(rig, training_cameras(w));
  TrainConfig t = experiment_train_defaults();
  t.seed = w.seed;
  t.meta_iterations = 500;
  const ViewPair pair{0, 1};
  std::vector<Task> tasks;
  std::vector<MultiViewSample> pooled;
  for (int i = 0; i < 60; ++i) {
    tasks.push_back(make_task(train_rig, pair, t.k, w, w.seed, i));
    pooled.insert(pooled.end(), tasks.back().train_split.begin(), tasks.back().train_split.end());
    pooled.insert(pooled.end(), tasks.back().test_split.begin(), tasks.back().test_split.end());
  }
  const auto test = generate_samples(rig, {0, 1}, 200, w, w.seed, 4242);
  const StackedBatch tb = stack_batch(test);
  const LossConfig lc = t.loss();

  const FactorizedFusionParams init = make_factorized(w.grid, {}, w.seed, 0.01, 0.01);
  const FactorizedFusionParams meta = meta_train(init, tasks, t);

  // supervised on the same pair with the same number of updates
  FactorizedFusionParams sup_init = init;
  sup_init.thetas[pair] = init.init_thetas;
  sup_init.thetas[{1, 0}] = init.init_thetas;
  sup_init.init_thetas.resize(0, 0);
  TrainConfig st = t;
  st.supervised_lr = t.outer_lr;
  st.epochs = t.meta_iterations * t.batch_size / static_cast<int>(pooled.size());
  const FusionParams sup = train_supervised(sup_init, pooled, st);

  const double l0 = loss_value(init, tb, lc);
  const double lm = loss_value(meta, tb, lc);
  const double ls = loss_value(sup, tb, lc);
  const double secs = seconds_since(t0);
  return {lm <= 1.1 * ls && secs < 300.0,
          fmt("test loss meta %.6f vs supervised %.6f (ratio %.4f <= 1.1; init %.6f), %.0f s (< 300)", lm, ls, lm / ls,
              l0, secs)};
}

// ---- 6-9. baseline study over three seeds

struct SeedRun {
  std::uint64_t seed = 0;
  ExperimentConfig cfg;
  EvalReport main;   // world occlusion rate
  EvalReport heavy;  // occlusion-heavy test scenes
  std::vector<double> mass_excess, mass_excess_supported;
};

struct Study {
  std::vector<SeedRun> runs;
  double seconds = 0.0;
  std::string error;
};

ExperimentConfig study_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.eval.k_list = {50, 100, 200};
  cfg.eval.heldout_pairs = 5;
  cfg.eval.full_samples = 1;  // NaiveFuse^full is not part of these criteria
  cfg.set_seed(seed);
  return cfg;
}

Study run_study() {
  Study st;
  const auto t0 = Clock::now();
  try {
    for (std::uint64_t seed : {1, 2, 3}) {
      SeedRun r;
      r.seed = seed;
      r.cfg = study_config(seed);
      const BaselineData data = make_baseline_data(r.cfg);
      const auto tm = Clock::now();
      const FactorizedFusionParams meta =
          meta_train(initial_meta_params(r.cfg), make_meta_tasks(data.rig, r.cfg), r.cfg.train);
      std::printf("      seed %llu: meta-training %.0f s\n", static_cast<unsigned long long>(seed), seconds_since(tm));
      std::fflush(stdout);

      BaselineSelection sel;
      sel.baselines = {Baseline::NoFusion, Baseline::NaiveK, Baseline::AffineK, Baseline::MetaK};
      r.main = run_baselines(data, &meta, r.cfg, sel);

      ExperimentConfig heavy_cfg = r.cfg;
      heavy_cfg.eval.test_occl_rate = 0.5;
      const BaselineData heavy = make_baseline_data(heavy_cfg);
      BaselineSelection hs;
      hs.baselines = {Baseline::NoFusion, Baseline::MetaK};
      hs.k_list = {200};
      r.heavy = run_baselines(heavy, &meta, heavy_cfg, hs);

      const GridShape g = r.cfg.world.grid;
      const Eigen::MatrixXd uniform = Eigen::MatrixXd::Ones(g.cells(), g.cells());
      for (const HeldoutPair& hp : data.pairs) {
        const std::vector<MultiViewSample> k100(hp.train.begin(), hp.train.begin() + 100);
        const FactorizedFusionParams adapted = finetune(meta, k100, r.cfg.train);
        for (const ViewPair& p : ordered_pairs({hp.cam_a, hp.cam_b})) {
          const FundamentalMatrix f = fundamental_from_cameras(data.rig.cameras[p.target], data.rig.cameras[p.source]);
          const int view = p.target == hp.cam_a ? 0 : 1;
          const std::vector<int> cells = supported_cells(k100, view);
          r.mass_excess.push_back(epipolar_mass_score(adapted, p, f, 3.0).score -
                                  epipolar_mass_score(uniform, g, f, 3.0).score);
          r.mass_excess_supported.push_back(epipolar_mass_score(adapted, p, f, 3.0, 1, cells).score -
                                            epipolar_mass_score(uniform, g, f, 3.0, 1, cells).score);
        }
      }
      st.runs.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    st.error = e.what();
  }
  st.seconds = seconds_since(t0);
  return st;
}

/// Median over pairs within each seed, then median over seeds.
template <typename Field>
double seed_median(const Study& st, bool heavy, Baseline b, int k, Field field) {
  std::vector<double> per_seed;
  for (const SeedRun& r : st.runs) per_seed.push_back(median_over_pairs(heavy ? r.heavy : r.main, b, k, field));
  return median(per_seed);
}

double occluded(const ModelScore& s) { return s.jdr.occluded; }
double all_joints(const ModelScore& s) { return s.jdr.all; }
double loss_of(const ModelScore& s) { return s.test_loss; }
double mpjpe_of(const ModelScore& s) { return s.mpjpe; }

void print_study(const Study& st) {
  std::printf("      median over pairs, then over seeds (%zu seeds):\n", st.runs.size());
  std::printf("      %-14s %5s %9s %9s %9s %10s\n", "baseline", "K", "JDR all", "occluded", "MPJPE", "test loss");
  for (int k : {50, 100, 200}) {
    for (Baseline b : {Baseline::NoFusion, Baseline::NaiveK, Baseline::AffineK, Baseline::MetaK}) {
      std::printf("      %-14s %5d %9.2f %9.2f %9.4f %10.6f\n", std::string(to_string(b)).c_str(), k,
                  seed_median(st, false, b, k, all_joints), seed_median(st, false, b, k, occluded),
                  seed_median(st, false, b, k, mpjpe_of), seed_median(st, false, b, k, loss_of));
    }
  }
  std::fflush(stdout);
}

Outcome require_study(const Study& st) {
  if (!st.error.empty()) return {false, "study failed: " + st.error};
  return {true, ""};
}

Outcome occluded_ordering(const Study& st) {
  if (auto o = require_study(st); !o.pass) return o;
  const double meta = seed_median(st, false, Baseline::MetaK, 50, occluded);
  const double none = seed_median(st, false, Baseline::NoFusion, 50, occluded);
  const double naive = seed_median(st, false, Baseline::NaiveK, 50, occluded);
  const bool ok = meta - none >= 2.0 && none - naive >= 2.0 && st.seconds < 1800.0;
  return {ok, fmt("occluded JDR at K=50: MetaFuse %.2f, No-Fusion %.2f, NaiveFuse %.2f; gaps %.2f and %.2f "
                  "(each >= 2); all-joint JDR %.2f / %.2f / %.2f; study %.0f s (< 1800)",
                  meta, none, naive, meta - none, none - naive, seed_median(st, false, Baseline::MetaK, 50, all_joints),
                  seed_median(st, false, Baseline::NoFusion, 50, all_joints),
                  seed_median(st, false, Baseline::NaiveK, 50, all_joints), st.seconds)};
}

Outcome adaptation_ordering(const Study& st) {
  if (auto o = require_study(st); !o.pass) return o;
  bool ok = true;
  std::string d;
  for (int k : {50, 100, 200}) {
    const double m = seed_median(st, false, Baseline::MetaK, k, loss_of);
    const double a = seed_median(st, false, Baseline::AffineK, k, loss_of);
    ok = ok && m < a;
    d += fmt("K=%d loss %.6f vs %.6f; ", k, m, a);
  }
  const double gap = seed_median(st, false, Baseline::MetaK, 50, all_joints) -
                     seed_median(st, false, Baseline::AffineK, 50, all_joints);
  ok = ok && gap >= 1.0;
  return {ok, d + fmt("all-joint JDR gap at K=50 %.2f (>= 1)", gap)};
}

Outcome epipolar_concentration(const Study& st) {
  if (auto o = require_study(st); !o.pass) return o;
  std::vector<double> all, sup;
  for (const SeedRun& r : st.runs) {
    all.insert(all.end(), r.mass_excess.begin(), r.mass_excess.end());
    sup.insert(sup.end(), r.mass_excess_supported.begin(), r.mass_excess_supported.end());
  }
  const double m = median(all);
  return {m >= 0.25, fmt("MetaFuse^100 in-band mass minus uniform, median over %zu directed pairs: %.3f (>= 0.25); "
                         "on cells with data %.3f",
                         all.size(), m, median(sup))};
}

Outcome mpjpe_improvement(const Study& st) {
  if (auto o = require_study(st); !o.pass) return o;
  std::vector<double> reductions;
  std::string d;
  for (const SeedRun& r : st.runs) {
    const double none = median_over_pairs(r.heavy, Baseline::NoFusion, 200, mpjpe_of);
    const double meta = median_over_pairs(r.heavy, Baseline::MetaK, 200, mpjpe_of);
    reductions.push_back(1.0 - meta / none);
    d += fmt("seed %llu %.4f -> %.4f; ", static_cast<unsigned long long>(r.seed), none, meta);
  }
  const double m = median(reductions);
  return {m >= 0.10, d + fmt("median relative reduction %.1f%% (>= 10%%) at occlusion rate 0.5", 100.0 * m)};
}

// ---- 10. determinism

Outcome determinism_and_resume() {
  ExperimentConfig cfg;
  cfg.set_seed(11);
  cfg.train.meta_iterations = 40;
  cfg.train.n_tasks = 20;
  cfg.eval.k_list = {50};
  cfg.eval.heldout_pairs = 2;
  cfg.eval.test_samples = 60;
  cfg.eval.pretrain_samples = 100;
  cfg.eval.pretrain_epochs = 1;
  cfg.eval.full_samples = 60;
  cfg.eval.full_epochs = 1;

  const auto run_once = [&] {
    const BaselineData data = make_baseline_data(cfg);
    const FactorizedFusionParams meta =
        meta_train(initial_meta_params(cfg), make_meta_tasks(data.rig, cfg), cfg.train);
    const EvalReport r = run_baselines(data, &meta, cfg);
    return report_csv(r) + to_json(r).dump();
  };
  const std::string first = run_once();
  setenv("FUSELAB_THREADS", "1", 1);
  const std::string second = run_once();
  unsetenv("FUSELAB_THREADS");
  const bool reports_equal = first == second;

  // interrupted run: persist the optimizer state, reload it, finish
  const Rig rig = make_world_rig(cfg.world);
  const std::vector<Task> tasks = make_meta_tasks(rig, cfg);
  MetaTrainState full = meta_train_start(initial_meta_params(cfg), cfg.train);
  meta_train_run(full, tasks, cfg.train, cfg.train.meta_iterations);
  MetaTrainState part = meta_train_start(initial_meta_params(cfg), cfg.train);
  meta_train_run(part, tasks, cfg.train, 17);
  const fs::path dir = fs::temp_directory_path() / "fuselab_acceptance";
  save_meta_state(dir / "state.json", part);
  MetaTrainState resumed = load_meta_state(dir / "state.json");
  meta_train_run(resumed, tasks, cfg.train, cfg.train.meta_iterations);
  save_model(dir / "full.json", full.params);
  save_model(dir / "resumed.json", resumed.params);
  const bool ck_equal = read_file(dir / "full.bin") == read_file(dir / "resumed.bin");
  const bool state_equal = (full.optim.m.array() == resumed.optim.m.array()).all() &&
                           (full.optim.v.array() == resumed.optim.v.array()).all() &&
                           (full.params.base.array() == resumed.params.base.array()).all() &&
                           (full.params.init_thetas.array() == resumed.params.init_thetas.array()).all();
  fs::remove_all(dir);
  return {reports_equal && ck_equal && state_equal,
          fmt("reports across reruns (%zu bytes, 1 vs default threads) %s; resumed-at-17 checkpoint %s, "
              "optimizer state %s",
              first.size(), reports_equal ? "identical" : "DIFFER", ck_equal ? "identical" : "DIFFERS",
              state_equal ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  report(1, "gradient correctness", gradient_correctness);
  report(2, "geometric soundness", geometric_soundness);
  report(3, "factorization equivalence", factorization_equivalence);
  report(4, "parameter counts", parameter_counts);
  report(5, "point-mass meta reduction", point_mass_reduction);

  std::printf("      running the three-seed baseline study for criteria 6-9\n");
  std::fflush(stdout);
  const Study study = run_study();
  if (study.error.empty()) print_study(study);
  report(6, "held-out occluded JDR ordering", [&] { return occluded_ordering(study); });
  report(7, "adaptation-value ordering", [&] { return adaptation_ordering(study); });
  report(8, "epipolar concentration", [&] { return epipolar_concentration(study); });
  report(9, "3D improvement", [&] { return mpjpe_improvement(study); });
  report(10, "determinism and resume", determinism_and_resume);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
