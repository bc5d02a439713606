#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuselab/fusion.hpp"
#include "fuselab/geometry.hpp"
#include "fuselab/objective.hpp"
#include "fuselab/synthworld.hpp"
#include "fuselab/train.hpp"

namespace fuselab {

/// Percentage of predictions within `threshold` (Euclidean) of the truth.
double jdr(std::span<const Pixel> pred, std::span<const Pixel> gt, double threshold);

/// Mean Euclidean distance, no alignment.
double mpjpe(std::span<const Point3> pred, std::span<const Point3> gt);

struct MassScore {
  double score = 0.0;     // mean in-band fraction over scored cells
  int scored = 0;
  int skipped_low_mass = 0;
  int skipped_degenerate = 0;
  bool undefined = true;  // nothing was scored
};

/// `weights` rows are target cells of `f`'s first view, columns source cells
/// of its second. Only every `stride`-th cell is scored unless `cells` lists
/// them explicitly.
MassScore epipolar_mass_score(const Eigen::MatrixXd& weights, const GridShape& grid, const FundamentalMatrix& f,
                              double band, int stride = 1, std::span<const int> cells = {});
MassScore epipolar_mass_score(const FactorizedFusionParams& params, const ViewPair& pair,
                              const FundamentalMatrix& f, double band, int stride = 1,
                              std::span<const int> cells = {});

/// Sorted cells of view `view` that hold an on-grid ground-truth joint in
/// some sample: where fusion weights actually receive data.
std::vector<int> supported_cells(std::span<const MultiViewSample> samples, int view);

struct JdrStrata {
  double visible = 0.0;
  double occluded = 0.0;
  double all = 0.0;
  std::int64_t n_visible = 0;
  std::int64_t n_occluded = 0;
  std::vector<double> per_joint;  // all strata
};

struct ModelScore {
  JdrStrata jdr;
  double mpjpe = 0.0;
  double test_loss = 0.0;
};

struct EvalConfig {
  double jdr_threshold = 2.0;  // grid cells
  double band = 3.0;
  std::vector<int> k_list{50, 100, 200, 500};
  LossConfig loss;  // objective reported as test_loss

  // baseline protocol
  int heldout_pairs = 5;      // unordered pairs drawn from the held-out cameras
  int test_samples = 200;     // per pair
  int pretrain_samples = 500; // NaiveFuse^K / AffineFuse^K pre-training on training cameras 0, 1
  int pretrain_epochs = 5;
  int full_samples = 1000;    // NaiveFuse^full
  int full_epochs = 5;
  double test_occl_rate = -1.0;  // < 0: the world's rate
};

/// Decodes every view (fused with `params`, or raw when empty), scores 2D
/// detections of on-grid joints and triangulates all views for MPJPE.
/// `cameras` is the full rig the samples index into.
ModelScore score_model(const std::optional<FusionParams>& params, const std::vector<MultiViewSample>& test,
                       const std::vector<Camera>& cameras, const EvalConfig& cfg);

}  // namespace fuselab
