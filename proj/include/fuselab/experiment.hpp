#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuselab/eval.hpp"
#include "fuselab/fusion.hpp"
#include "fuselab/synthworld.hpp"
#include "fuselab/train.hpp"

namespace fuselab {

/// Training defaults used by experiments: the heatmap objective compares
/// temperature softmaxes, and the outer rate is raised so that ~1000
/// iterations suffice at desk scale.
inline TrainConfig experiment_train_defaults() {
  TrainConfig t;
  t.loss_on_softmax = true;
  t.outer_lr = 3e-3;
  t.meta_iterations = 1000;
  t.n_tasks = 200;
  return t;
}

struct ExperimentPaths {
  std::string world_dir = "world";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";
};

struct ExperimentConfig {
  WorldConfig world;
  TrainConfig train = experiment_train_defaults();
  EvalConfig eval;
  ExperimentPaths paths;

  /// Keeps world.seed and train.seed in step.
  void set_seed(std::uint64_t seed);
};

/// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

enum class Baseline { NoFusion, NaiveFull, NaiveK, AffineK, MetaK };

std::string_view to_string(Baseline b);
inline constexpr Baseline kAllBaselines[] = {Baseline::NoFusion, Baseline::NaiveFull, Baseline::NaiveK,
                                             Baseline::AffineK, Baseline::MetaK};

/// Rig cameras used for meta-training: 0 .. n_cams-1.
std::vector<int> training_cameras(const WorldConfig& world);
/// Unordered pairs of held-out cameras, spread over the held-out set.
std::vector<std::pair<int, int>> heldout_camera_pairs(const WorldConfig& world, int n);

/// Meta-training task pool over the training cameras.
std::vector<Task> make_meta_tasks(const Rig& rig, const ExperimentConfig& cfg);
/// Random initialization handed to meta_train.
FactorizedFusionParams initial_meta_params(const ExperimentConfig& cfg);

struct HeldoutPair {
  int cam_a = 0;
  int cam_b = 0;
  std::vector<MultiViewSample> train;  // max(k_list) samples; K uses the first K
  std::vector<MultiViewSample> test;
  std::vector<MultiViewSample> full;   // NaiveFuse^full training set
};

struct BaselineData {
  Rig rig;
  std::vector<MultiViewSample> pretrain;  // training cameras 0, 1
  std::vector<HeldoutPair> pairs;
};

BaselineData make_baseline_data(const ExperimentConfig& cfg);

struct ReportRow {
  Baseline baseline = Baseline::NoFusion;
  int k = 0;
  int pair_index = 0;
  int cam_a = 0;
  int cam_b = 0;
  ModelScore score;
};

struct EvalReport {
  std::string fingerprint;  // hash of the experiment config
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
};

struct BaselineSelection {
  std::vector<Baseline> baselines{std::begin(kAllBaselines), std::end(kAllBaselines)};
  std::vector<int> k_list;  // empty: cfg.eval.k_list
};

/// One row per (baseline, K, held-out pair). MetaFuse rows need `meta`
/// (MissingCheckpoint otherwise).
EvalReport run_baselines(const BaselineData& data, const FactorizedFusionParams* meta, const ExperimentConfig& cfg,
                         const BaselineSelection& select = {});

double median(std::vector<double> values);

/// Median over pairs of `field` for the rows of (baseline, k).
template <typename Field>
double median_over_pairs(const EvalReport& report, Baseline b, int k, Field field) {
  std::vector<double> v;
  for (const ReportRow& r : report.rows) {
    if (r.baseline == b && r.k == k) v.push_back(field(r.score));
  }
  return median(std::move(v));
}

std::string report_csv(const EvalReport& report);

}  // namespace fuselab
