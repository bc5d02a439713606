#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "fuselab/fusion.hpp"
#include "fuselab/objective.hpp"
#include "fuselab/synthworld.hpp"

namespace fuselab {

enum class OptimKind { Sgd, Adam };

struct OptimState {
  OptimKind kind = OptimKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;  // first moment
  Eigen::VectorXd v;  // second moment
  std::int64_t step = 0;
};

OptimState make_optimizer(OptimKind kind, double lr, Eigen::Index n_params);

/// Bias-corrected Adam. Empty moment buffers are zero-initialized on first use.
void adam_step(OptimState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);
/// Dispatches on state.kind.
void optimizer_step(OptimState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

struct TrainConfig {
  double inner_lr = 1e-3;       // alpha
  double outer_lr = 1e-3;       // beta
  double finetune_lr = 5e-3;
  double supervised_lr = 1e-3;
  int epochs = 10;
  int meta_iterations = 2000;
  int meta_batch = 1;           // tasks per outer update
  int k = 8;                    // samples per task split
  int n_tasks = 400;
  PairSampling sampling = PairSampling::Random;
  int batch_size = 8;
  int finetune_steps = 100;
  bool first_order = false;
  bool loss_on_softmax = false;
  double temperature = 0.2;
  std::uint64_t seed = 0;

  LossConfig loss() const { return {loss_on_softmax, temperature}; }
};

/// Throws InvalidArgument unless rates are positive and k >= 1.
void validate(const TrainConfig& cfg);

/// Mini-batch Adam on the batch-mean fusion loss over `data`, which must share
/// one camera set. `mask` selects the trained tensors.
FusionParams train_supervised(FusionParams params, const std::vector<MultiViewSample>& data,
                              const TrainConfig& cfg, const ParamMask& mask = {});

struct MetaLogRow {
  int iteration = 0;
  int task_id = 0;
  double train_loss = 0.0;  // train split, before the inner step
  double test_loss = 0.0;   // test split, after it
};

using MetaLogFn = std::function<void(const MetaLogRow&)>;

/// Everything needed to continue meta-training exactly where it stopped.
struct MetaTrainState {
  FactorizedFusionParams params;
  OptimState optim;
  int iteration = 0;
};

MetaTrainState meta_train_start(const FactorizedFusionParams& init, const TrainConfig& cfg);

/// Runs outer iterations until state.iteration == until. Tasks are visited in
/// a per-epoch shuffle derived from the seed, so a resumed run replays the
/// same sequence. On NumericalOverflow, `state` still holds the last good
/// parameters and the error names the iteration.
void meta_train_run(MetaTrainState& state, const std::vector<Task>& tasks, const TrainConfig& cfg, int until,
                    const MetaLogFn& log = {});

/// Full meta-training loop: returns the meta-initialization with the base frozen.
/// Every tensor present in `params` (base, init_thetas, pair thetas) is trained.
FactorizedFusionParams meta_train(const FactorizedFusionParams& params, const std::vector<Task>& tasks,
                                  const TrainConfig& cfg, const MetaLogFn& log = {});

/// Adapts the thetas of every ordered pair seen in `data`; pairs without their
/// own set start from init_thetas. The base is never written. Empty data is a
/// no-op. Throws WrongModelKind for dense params.
FusionParams finetune(const FusionParams& params, const std::vector<MultiViewSample>& data,
                      const TrainConfig& cfg);
FactorizedFusionParams finetune(const FactorizedFusionParams& params, const std::vector<MultiViewSample>& data,
                                const TrainConfig& cfg);

/// NaiveFuse^K adaptation: every dense weight of the pairs seen in `data`,
/// with the same step count, batch and rate as `finetune`. Pairs missing from
/// `params` start at zero.
DenseFusionParams finetune_dense(const DenseFusionParams& params, const std::vector<MultiViewSample>& data,
                                 const TrainConfig& cfg);

}  // namespace fuselab
