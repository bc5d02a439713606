#pragma once

#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fuselab/fusion.hpp"
#include "fuselab/heatmap.hpp"
#include "fuselab/synthworld.hpp"

namespace fuselab {

struct LossConfig {
  /// Compare softmax(fused, temperature) instead of the raw fused map.
  bool loss_on_softmax = false;
  double temperature = 0.2;
};

/// Samples that share one camera set, stacked column-wise per view
/// (|Z| x (samples * joints)).
struct StackedBatch {
  GridShape grid;
  std::vector<int> cameras;
  std::vector<Eigen::MatrixXd> detections;
  std::vector<Eigen::MatrixXd> targets;
  int n_samples = 0;

  std::vector<ViewPair> pairs() const { return ordered_pairs(cameras); }
};

/// Throws ShapeError for an empty batch or mixed camera sets / grids.
StackedBatch stack_batch(std::span<const MultiViewSample> samples);

/// Gradient of a scalar objective, mirroring the parameter containers.
/// Only tensors that took part in the objective are present.
struct GradientBundle {
  Heatmap d_base;                 // h x w (factorized)
  Eigen::MatrixXd d_init_thetas;  // |Z| x 6 when the shared set was used
  std::map<ViewPair, Eigen::MatrixXd> d_thetas;
  std::map<ViewPair, Eigen::MatrixXd> d_w;  // dense
};

struct LossAndGrad {
  double loss = 0.0;
  GradientBundle grad;
};

/// Batch-mean of the per-sample MSE between fused and ground-truth heatmaps,
/// with exact reverse-mode gradients.
LossAndGrad loss_and_grad(const FusionParams& params, const StackedBatch& batch,
                          const LossConfig& cfg = {});
LossAndGrad loss_and_grad(const FusionParams& params, std::span<const MultiViewSample> batch,
                          const LossConfig& cfg = {});
double loss_value(const FusionParams& params, const StackedBatch& batch, const LossConfig& cfg = {});

struct MetaGradConfig {
  bool first_order = false;
  LossConfig loss;
};

/// One inner gradient step (step size `alpha`) on the task's train split,
/// then the test-split loss at the adapted parameters. The gradient is taken
/// with respect to the parameters before the inner step, differentiating
/// through it unless `first_order`. Both directions of the task's pair adapt
/// their own thetas; gradients for directions that share `init_thetas` are
/// summed into `d_init_thetas`.
LossAndGrad meta_grad(const FactorizedFusionParams& params, const Task& task, double alpha,
                      const MetaGradConfig& cfg = {});

/// Value of the meta-objective only (same inner step as `meta_grad`).
double meta_objective(const FactorizedFusionParams& params, const Task& task, double alpha,
                      const LossConfig& cfg = {});

/// Which tensors `flatten` covers. Order: base, init_thetas, per-pair
/// tensors in pair order.
struct ParamMask {
  bool base = true;
  bool init_thetas = true;
  bool pair_tensors = true;
};

Eigen::VectorXd flatten(const FusionParams& params, const ParamMask& mask = {});
void unflatten(FusionParams& params, const Eigen::VectorXd& flat, const ParamMask& mask = {});
/// Gradient laid out like `flatten(like, mask)`; missing pieces are zero.
Eigen::VectorXd flatten(const GradientBundle& grad, const FusionParams& like, const ParamMask& mask = {});

}  // namespace fuselab
