#include "fuselab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "fuselab/error.hpp"
#include "fuselab/parallel.hpp"

namespace fuselab {

OptimState make_optimizer(OptimKind kind, double lr, Eigen::Index n_params) {
  OptimState s;
  s.kind = kind;
  s.lr = lr;
  if (kind == OptimKind::Adam) {
    s.m = Eigen::VectorXd::Zero(n_params);
    s.v = Eigen::VectorXd::Zero(n_params);
  }
  return s;
}

void adam_step(OptimState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  require(params.size() == grads.size(), ErrorKind::ShapeError, "gradient length differs from params");
  if (state.m.size() == 0 && state.v.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::ShapeError,
          "optimizer moments do not match params");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads(i);
    state.m(i) = state.beta1 * state.m(i) + (1.0 - state.beta1) * g;
    state.v(i) = state.beta2 * state.v(i) + (1.0 - state.beta2) * g * g;
    const double mhat = state.m(i) / c1;
    const double vhat = state.v(i) / c2;
    params(i) -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void optimizer_step(OptimState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (state.kind == OptimKind::Adam) {
    adam_step(state, params, grads);
    return;
  }
  require(params.size() == grads.size(), ErrorKind::ShapeError, "gradient length differs from params");
  ++state.step;
  params -= state.lr * grads;
}

void validate(const TrainConfig& cfg) {
  require(cfg.inner_lr >= 0.0, ErrorKind::InvalidArgument, "inner_lr must be non-negative");
  require(cfg.outer_lr > 0.0 && cfg.finetune_lr > 0.0 && cfg.supervised_lr > 0.0, ErrorKind::InvalidArgument,
          "learning rates must be positive");
  require(cfg.k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  require(cfg.batch_size >= 1 && cfg.meta_batch >= 1, ErrorKind::InvalidArgument, "batch sizes must be >= 1");
  require(cfg.epochs >= 0 && cfg.meta_iterations >= 0 && cfg.finetune_steps >= 0, ErrorKind::InvalidArgument,
          "iteration counts must be non-negative");
  require(cfg.temperature > 0.0, ErrorKind::InvalidTemperature, "temperature must be positive");
}

namespace {

/// Seeded epoch-wise shuffles of [0, n), read as one long index sequence.
class IndexStream {
 public:
  IndexStream(int n, std::uint64_t seed, std::uint64_t tag) : n_(n), seed_(seed), tag_(tag) {}

  int at(std::int64_t position) {
    const std::int64_t epoch = position / n_;
    if (epoch != epoch_) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), 0);
      RngState rng = make_stream(seed_, tag_, static_cast<std::uint64_t>(epoch));
      std::shuffle(order_.begin(), order_.end(), rng);
      epoch_ = epoch;
    }
    return order_[position % n_];
  }

 private:
  int n_;
  std::uint64_t seed_;
  std::uint64_t tag_;
  std::int64_t epoch_ = -1;
  std::vector<int> order_;
};

constexpr std::uint64_t kSupervisedTag = 0x5e1f;
constexpr std::uint64_t kMetaTag = 0x3e7a;
constexpr std::uint64_t kFinetuneTag = 0xf17e;

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// `steps` Adam updates on minibatches of `data` drawn from `stream`.
void minibatch_adam(FusionParams& params, const std::vector<MultiViewSample>& data, const ParamMask& mask,
                    double lr, int steps, int batch_size, const LossConfig& loss, IndexStream& stream) {
  if (steps <= 0 || data.empty()) return;
  const int bs = std::min<int>(batch_size, static_cast<int>(data.size()));
  Eigen::VectorXd flat = flatten(params, mask);
  OptimState opt = make_optimizer(OptimKind::Adam, lr, flat.size());
  std::vector<MultiViewSample> batch(bs);
  std::int64_t position = 0;
  for (int step = 0; step < steps; ++step) {
    for (int b = 0; b < bs; ++b) batch[b] = data[stream.at(position++)];
    LossAndGrad lg;
    try {
      lg = loss_and_grad(params, batch, loss);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NumericalOverflow) throw;
      fail(ErrorKind::NumericalOverflow, "step " + std::to_string(step) + ": " + e.what());
    }
    Eigen::VectorXd next = flat;
    adam_step(opt, next, flatten(lg.grad, params, mask));
    require(all_finite(next), ErrorKind::NumericalOverflow,
            "non-finite parameters after step " + std::to_string(step));
    flat = std::move(next);
    unflatten(params, flat, mask);
  }
}

}  // namespace

FusionParams train_supervised(FusionParams params, const std::vector<MultiViewSample>& data,
                              const TrainConfig& cfg, const ParamMask& mask) {
  validate(cfg);
  require(!data.empty(), ErrorKind::InvalidArgument, "supervised training needs data");
  const int n = static_cast<int>(data.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  IndexStream stream(n, cfg.seed, kSupervisedTag);
  minibatch_adam(params, data, mask, cfg.supervised_lr, cfg.epochs * per_epoch, cfg.batch_size, cfg.loss(),
                 stream);
  return params;
}

MetaTrainState meta_train_start(const FactorizedFusionParams& init, const TrainConfig& cfg) {
  validate(cfg);
  MetaTrainState s;
  s.params = init;
  s.params.base_frozen = false;
  s.optim = make_optimizer(OptimKind::Adam, cfg.outer_lr, flatten(FusionParams{s.params}).size());
  return s;
}

void meta_train_run(MetaTrainState& state, const std::vector<Task>& tasks, const TrainConfig& cfg, int until,
                    const MetaLogFn& log) {
  validate(cfg);
  require(!tasks.empty(), ErrorKind::NoTasks, "meta-training needs at least one task");
  IndexStream stream(static_cast<int>(tasks.size()), cfg.seed, kMetaTag);
  const MetaGradConfig mcfg{cfg.first_order, cfg.loss()};
  const int mb = cfg.meta_batch;

  while (state.iteration < until) {
    const int it = state.iteration;
    std::vector<int> ids(mb);
    for (int b = 0; b < mb; ++b) ids[b] = stream.at(static_cast<std::int64_t>(it) * mb + b);

    std::vector<LossAndGrad> results(mb);
    std::vector<double> train_losses(mb);
    try {
      parallel_for(mb, [&](int b) {
        const Task& task = tasks[ids[b]];
        results[b] = meta_grad(state.params, task, cfg.inner_lr, mcfg);
        if (log) {
          const FusionParams wrapped = state.params;
          train_losses[b] = loss_value(wrapped, stack_batch(task.train_split), cfg.loss());
        }
      });
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NumericalOverflow) throw;
      fail(ErrorKind::NumericalOverflow, "meta iteration " + std::to_string(it) + ": " + e.what());
    }

    const FusionParams wrapped = state.params;
    Eigen::VectorXd grad = flatten(results[0].grad, wrapped);
    for (int b = 1; b < mb; ++b) grad += flatten(results[b].grad, wrapped);
    if (mb > 1) grad /= static_cast<double>(mb);

    Eigen::VectorXd flat = flatten(wrapped);
    OptimState optim = state.optim;
    adam_step(optim, flat, grad);
    require(all_finite(flat), ErrorKind::NumericalOverflow,
            "non-finite parameters at meta iteration " + std::to_string(it));
    FusionParams updated = state.params;
    unflatten(updated, flat);
    state.params = std::get<FactorizedFusionParams>(std::move(updated));
    state.optim = std::move(optim);
    ++state.iteration;

    if (log) {
      MetaLogRow row;
      row.iteration = it;
      row.task_id = ids[0];
      for (int b = 0; b < mb; ++b) {
        row.train_loss += train_losses[b] / mb;
        row.test_loss += results[b].loss / mb;
      }
      log(row);
    }
  }
}

FactorizedFusionParams meta_train(const FactorizedFusionParams& params, const std::vector<Task>& tasks,
                                  const TrainConfig& cfg, const MetaLogFn& log) {
  require(!tasks.empty(), ErrorKind::NoTasks, "meta-training needs at least one task");
  MetaTrainState state = meta_train_start(params, cfg);
  meta_train_run(state, tasks, cfg, cfg.meta_iterations, log);
  state.params.base_frozen = true;
  return state.params;
}

FactorizedFusionParams finetune(const FactorizedFusionParams& params, const std::vector<MultiViewSample>& data,
                                const TrainConfig& cfg) {
  validate(cfg);
  if (data.empty()) return params;
  FactorizedFusionParams adapted = params;
  for (const ViewPair& pair : ordered_pairs(data.front().cameras)) {
    if (adapted.thetas.count(pair) == 0) adapted.thetas[pair] = params.thetas_for(pair);
  }
  // only the pairs being adapted are exposed to the optimizer
  FactorizedFusionParams work = adapted;
  work.thetas.clear();
  for (const ViewPair& pair : ordered_pairs(data.front().cameras)) work.thetas[pair] = adapted.thetas.at(pair);
  work.init_thetas.resize(0, 0);

  FusionParams wrapped = work;
  IndexStream stream(static_cast<int>(data.size()), cfg.seed, kFinetuneTag);
  minibatch_adam(wrapped, data, ParamMask{false, false, true}, cfg.finetune_lr, cfg.finetune_steps,
                 cfg.batch_size, cfg.loss(), stream);
  for (const auto& [pair, t] : std::get<FactorizedFusionParams>(wrapped).thetas) adapted.thetas[pair] = t;
  return adapted;
}

DenseFusionParams finetune_dense(const DenseFusionParams& params, const std::vector<MultiViewSample>& data,
                                 const TrainConfig& cfg) {
  validate(cfg);
  if (data.empty()) return params;
  DenseFusionParams adapted = params;
  DenseFusionParams work;
  work.grid = params.grid;
  for (const ViewPair& pair : ordered_pairs(data.front().cameras)) {
    auto it = params.weights.find(pair);
    work.weights[pair] = it != params.weights.end()
                             ? it->second
                             : Eigen::MatrixXd::Zero(params.grid.cells(), params.grid.cells());
  }
  FusionParams wrapped = work;
  IndexStream stream(static_cast<int>(data.size()), cfg.seed, kFinetuneTag);
  minibatch_adam(wrapped, data, ParamMask{}, cfg.finetune_lr, cfg.finetune_steps, cfg.batch_size, cfg.loss(),
                 stream);
  for (const auto& [pair, w] : std::get<DenseFusionParams>(wrapped).weights) adapted.weights[pair] = w;
  return adapted;
}

FusionParams finetune(const FusionParams& params, const std::vector<MultiViewSample>& data,
                      const TrainConfig& cfg) {
  const auto* fac = std::get_if<FactorizedFusionParams>(&params);
  require(fac != nullptr, ErrorKind::WrongModelKind, "only factorized models can be finetuned");
  return finetune(*fac, data, cfg);
}

}  // namespace fuselab
