#include "fuselab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>

#include "fuselab/error.hpp"
#include "fuselab/io.hpp"

namespace fuselab {

namespace {

// generate_samples streams of the baseline data; tasks use sample_tasks' own
constexpr std::uint64_t kPretrainStream = 9000;
constexpr std::uint64_t kKStream = 1000;
constexpr std::uint64_t kTestStream = 2000;
constexpr std::uint64_t kFullStream = 3000;

void check(bool ok, const std::string& field, const std::string& what) {
  require(ok, ErrorKind::ConfigError, field + ": " + what);
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t seed) {
  world.seed = seed;
  train.seed = seed;
}

void validate(const ExperimentConfig& cfg) {
  const WorldConfig& w = cfg.world;
  check(w.n_cams >= 2, "world.n_cams", "need at least 2 training cameras");
  check(w.n_test_cams >= 2, "world.n_test_cams", "need at least 2 held-out cameras");
  check(w.radius > 0.0, "world.radius", "must be positive");
  check(w.grid.h >= 2, "world.grid.h", "must be >= 2");
  check(w.grid.w >= 2, "world.grid.w", "must be >= 2");
  check(w.n_joints >= 1, "world.n_joints", "must be >= 1");
  check(w.occl_rate >= 0.0 && w.occl_rate < 1.0, "world.occl_rate", "must lie in [0, 1)");
  check(w.noise.jitter >= 0.0, "world.noise.jitter", "must be non-negative");
  check(w.noise.confusion >= 0.0 && w.noise.confusion <= 1.0, "world.noise.confusion", "must lie in [0, 1]");
  check(w.noise.distractor_amp >= 0.0, "world.noise.distractor_amp", "must be non-negative");
  check(w.noise.clutter_rate >= 0.0 && w.noise.clutter_rate <= 1.0, "world.noise.clutter_rate",
        "must lie in [0, 1]");
  check(w.volume_extent > 0.0, "world.volume_extent", "must be positive");
  check(w.heatmap_sigma > 0.0, "world.heatmap_sigma", "must be positive");
  check(w.min_elevation_deg <= w.max_elevation_deg, "world.min_elevation_deg", "exceeds max_elevation_deg");

  const TrainConfig& t = cfg.train;
  check(t.inner_lr >= 0.0, "train.inner_lr", "must be non-negative");
  check(t.outer_lr > 0.0, "train.outer_lr", "must be positive");
  check(t.finetune_lr > 0.0, "train.finetune_lr", "must be positive");
  check(t.supervised_lr > 0.0, "train.supervised_lr", "must be positive");
  check(t.epochs >= 0, "train.epochs", "must be non-negative");
  check(t.meta_iterations >= 0, "train.meta_iterations", "must be non-negative");
  check(t.meta_batch >= 1, "train.meta_batch", "must be >= 1");
  check(t.k >= 1, "train.k", "must be >= 1");
  check(t.n_tasks >= 1, "train.n_tasks", "must be >= 1");
  check(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(t.finetune_steps >= 0, "train.finetune_steps", "must be non-negative");
  check(t.temperature > 0.0, "train.temperature", "must be positive");

  const EvalConfig& e = cfg.eval;
  check(e.jdr_threshold > 0.0, "eval.jdr_threshold", "must be positive");
  check(e.band > 0.0, "eval.band", "must be positive");
  check(!e.k_list.empty(), "eval.k_list", "must not be empty");
  for (std::size_t i = 0; i < e.k_list.size(); ++i) {
    check(e.k_list[i] >= 1, "eval.k_list[" + std::to_string(i) + "]", "must be >= 1");
  }
  const int max_pairs = w.n_test_cams * (w.n_test_cams - 1) / 2;
  check(e.heldout_pairs >= 1 && e.heldout_pairs <= max_pairs, "eval.heldout_pairs",
        "must lie in [1, " + std::to_string(max_pairs) + "]");
  check(e.test_samples >= 1, "eval.test_samples", "must be >= 1");
  check(e.pretrain_samples >= 1, "eval.pretrain_samples", "must be >= 1");
  check(e.pretrain_epochs >= 0, "eval.pretrain_epochs", "must be non-negative");
  check(e.full_samples >= 1, "eval.full_samples", "must be >= 1");
  check(e.full_epochs >= 0, "eval.full_epochs", "must be non-negative");
  check(e.test_occl_rate < 1.0, "eval.test_occl_rate", "must be < 1 (negative selects the world's rate)");

  check(!cfg.paths.world_dir.empty(), "paths.world_dir", "must not be empty");
  check(!cfg.paths.checkpoint_dir.empty(), "paths.checkpoint_dir", "must not be empty");
  check(!cfg.paths.report_dir.empty(), "paths.report_dir", "must not be empty");
}

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::NoFusion: return "No-Fusion";
    case Baseline::NaiveFull: return "NaiveFuse^full";
    case Baseline::NaiveK: return "NaiveFuse^K";
    case Baseline::AffineK: return "AffineFuse^K";
    case Baseline::MetaK: return "MetaFuse^K";
  }
  return "?";
}

std::vector<int> training_cameras(const WorldConfig& world) {
  std::vector<int> ids(world.n_cams);
  for (int i = 0; i < world.n_cams; ++i) ids[i] = i;
  return ids;
}

std::vector<std::pair<int, int>> heldout_camera_pairs(const WorldConfig& world, int n) {
  const int m = world.n_test_cams;
  // stride 2 first so consecutive pairs share no camera
  std::vector<int> gaps;
  for (int g = 2; g < m; ++g) gaps.push_back(g);
  gaps.push_back(1);
  std::vector<std::pair<int, int>> out;
  std::set<std::pair<int, int>> seen;
  for (int g : gaps) {
    for (int a = 0; a < m && static_cast<int>(out.size()) < n; ++a) {
      const int b = (a + g) % m;
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      if (!seen.insert(key).second) continue;
      out.emplace_back(world.n_cams + a, world.n_cams + b);
    }
  }
  require(static_cast<int>(out.size()) == n, ErrorKind::InvalidArgument, "not enough held-out camera pairs");
  return out;
}

std::vector<Task> make_meta_tasks(const Rig& rig, const ExperimentConfig& cfg) {
  const Rig train_rig = sub_rig(rig, training_cameras(cfg.world));
  return sample_tasks(train_rig, cfg.train.n_tasks, cfg.train.k, cfg.world, cfg.world.seed, cfg.train.sampling);
}

FactorizedFusionParams initial_meta_params(const ExperimentConfig& cfg) {
  return make_factorized(cfg.world.grid, {}, cfg.world.seed, 0.01, 0.01);
}

BaselineData make_baseline_data(const ExperimentConfig& cfg) {
  BaselineData data;
  data.rig = make_world_rig(cfg.world);
  const std::uint64_t seed = cfg.world.seed;
  data.pretrain = generate_samples(data.rig, {0, 1}, cfg.eval.pretrain_samples, cfg.world, seed, kPretrainStream);
  WorldConfig test_world = cfg.world;
  if (cfg.eval.test_occl_rate >= 0.0) test_world.occl_rate = cfg.eval.test_occl_rate;
  const int max_k = *std::max_element(cfg.eval.k_list.begin(), cfg.eval.k_list.end());
  const auto pairs = heldout_camera_pairs(cfg.world, cfg.eval.heldout_pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    HeldoutPair hp;
    hp.cam_a = pairs[i].first;
    hp.cam_b = pairs[i].second;
    const std::vector<int> cams{hp.cam_a, hp.cam_b};
    hp.train = generate_samples(data.rig, cams, max_k, cfg.world, seed, kKStream + i);
    hp.test = generate_samples(data.rig, cams, cfg.eval.test_samples, test_world, seed, kTestStream + i);
    hp.full = generate_samples(data.rig, cams, cfg.eval.full_samples, cfg.world, seed, kFullStream + i);
    data.pairs.push_back(std::move(hp));
  }
  return data;
}

EvalReport run_baselines(const BaselineData& data, const FactorizedFusionParams* meta, const ExperimentConfig& cfg,
                         const BaselineSelection& select) {
  validate(cfg);
  EvalConfig ec = cfg.eval;
  ec.loss = cfg.train.loss();
  const std::vector<int> ks = select.k_list.empty() ? cfg.eval.k_list : select.k_list;
  auto wanted = [&](Baseline b) {
    return std::find(select.baselines.begin(), select.baselines.end(), b) != select.baselines.end();
  };
  require(!wanted(Baseline::MetaK) || meta != nullptr, ErrorKind::MissingCheckpoint,
          "MetaFuse rows need a meta-trained checkpoint");

  const GridShape grid = cfg.world.grid;
  const std::vector<ViewPair> pre_pairs = ordered_pairs({0, 1});
  TrainConfig sup = cfg.train;
  sup.epochs = cfg.eval.pretrain_epochs;
  std::optional<DenseFusionParams> naive_pre;
  std::optional<FactorizedFusionParams> affine_pre;
  if (wanted(Baseline::NaiveK)) {
    naive_pre = std::get<DenseFusionParams>(train_supervised(make_dense(grid, pre_pairs), data.pretrain, sup));
  }
  if (wanted(Baseline::AffineK)) {
    const FactorizedFusionParams init = make_factorized(grid, pre_pairs, cfg.world.seed + 1, 0.01, 0.01);
    affine_pre = std::get<FactorizedFusionParams>(train_supervised(init, data.pretrain, sup));
  }

  EvalReport report;
  report.fingerprint = config_fingerprint(cfg);
  report.seed = cfg.world.seed;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const HeldoutPair& hp = data.pairs[i];
    const std::vector<ViewPair> pairs = ordered_pairs({hp.cam_a, hp.cam_b});
    auto add = [&](Baseline b, int k, const ModelScore& s) {
      report.rows.push_back({b, k, static_cast<int>(i), hp.cam_a, hp.cam_b, s});
    };
    auto score = [&](const std::optional<FusionParams>& p) {
      return score_model(p, hp.test, data.rig.cameras, ec);
    };

    std::optional<ModelScore> none, full;
    if (wanted(Baseline::NoFusion)) none = score(std::nullopt);
    if (wanted(Baseline::NaiveFull)) {
      TrainConfig fc = cfg.train;
      fc.epochs = cfg.eval.full_epochs;
      full = score(train_supervised(make_dense(grid, pairs), hp.full, fc));
    }
    // pre-trained pair parameters move to the new pair by ordinal
    DenseFusionParams naive_t;
    FactorizedFusionParams affine_t;
    if (naive_pre) {
      naive_t.grid = grid;
      for (std::size_t q = 0; q < pairs.size(); ++q) naive_t.weights[pairs[q]] = naive_pre->weights.at(pre_pairs[q]);
    }
    if (affine_pre) {
      affine_t = *affine_pre;
      affine_t.thetas.clear();
      for (std::size_t q = 0; q < pairs.size(); ++q) affine_t.thetas[pairs[q]] = affine_pre->thetas.at(pre_pairs[q]);
    }

    for (int k : ks) {
      require(k >= 1 && k <= static_cast<int>(hp.train.size()), ErrorKind::InvalidArgument,
              "K=" + std::to_string(k) + " exceeds the generated finetuning set");
      const std::vector<MultiViewSample> kdata(hp.train.begin(), hp.train.begin() + k);
      for (Baseline b : kAllBaselines) {
        if (!wanted(b)) continue;
        switch (b) {
          case Baseline::NoFusion: add(b, k, *none); break;
          case Baseline::NaiveFull: add(b, k, *full); break;
          case Baseline::NaiveK: add(b, k, score(finetune_dense(naive_t, kdata, cfg.train))); break;
          case Baseline::AffineK: add(b, k, score(finetune(affine_t, kdata, cfg.train))); break;
          case Baseline::MetaK: add(b, k, score(finetune(*meta, kdata, cfg.train))); break;
        }
      }
    }
  }
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string report_csv(const EvalReport& report) {
  std::string out =
      "baseline,k,pair,cam_a,cam_b,jdr_all,jdr_visible,jdr_occluded,n_visible,n_occluded,mpjpe,test_loss\n";
  char line[512];
  for (const ReportRow& r : report.rows) {
    const ModelScore& s = r.score;
    std::snprintf(line, sizeof line, "%s,%d,%d,%d,%d,%.4f,%.4f,%.4f,%lld,%lld,%.6f,%.8e\n",
                  std::string(to_string(r.baseline)).c_str(), r.k, r.pair_index, r.cam_a, r.cam_b, s.jdr.all,
                  s.jdr.visible, s.jdr.occluded, static_cast<long long>(s.jdr.n_visible),
                  static_cast<long long>(s.jdr.n_occluded), s.mpjpe, s.test_loss);
    out += line;
  }
  return out;
}

}  // namespace fuselab
