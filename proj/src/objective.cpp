#include "fuselab/objective.hpp"

#include <unsupported/Eigen/AutoDiff>

#include "fuselab/error.hpp"
#include "fuselab/tape.hpp"

namespace fuselab {

namespace {

using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, 1, 1>>;

/// Learnable tensors of one objective evaluation. For factorized models
/// leaves[0] is the base as a |Z| x 1 column; `slot` names the leaf that
/// supplies the weights (dense) or thetas (factorized) of each direction.
template <typename Scalar>
struct LeafSet {
  FusionKind kind = FusionKind::Factorized;
  std::vector<MatrixX<Scalar>> leaves;
  std::map<ViewPair, int> slot;
};

template <typename Scalar>
struct Evaluation {
  Scalar loss;
  std::vector<MatrixX<Scalar>> grads;
};

template <typename Scalar>
Evaluation<Scalar> evaluate(const LeafSet<Scalar>& set, const StackedBatch& batch, const LossConfig& cfg,
                            bool with_grad) {
  Tape<Scalar> tape;
  std::vector<int> leaf_ids;
  leaf_ids.reserve(set.leaves.size());
  for (const auto& l : set.leaves) leaf_ids.push_back(tape.leaf(l, with_grad));

  const int n_views = static_cast<int>(batch.cameras.size());
  std::vector<int> det_ids(n_views);
  for (int v = 0; v < n_views; ++v) det_ids[v] = tape.leaf(batch.detections[v].template cast<Scalar>());

  std::map<ViewPair, int> weight_ids;
  auto weights_for = [&](const ViewPair& pair) {
    if (auto it = weight_ids.find(pair); it != weight_ids.end()) return it->second;
    auto s = set.slot.find(pair);
    if (s == set.slot.end()) {
      fail(ErrorKind::MissingPairParams,
           "no parameters for pair (" + std::to_string(pair.target) + " <- " + std::to_string(pair.source) + ")");
    }
    const int id = set.kind == FusionKind::Dense ? leaf_ids[s->second]
                                                 : tape.warp(leaf_ids[0], leaf_ids[s->second], batch.grid);
    weight_ids.emplace(pair, id);
    return id;
  };

  int total = -1;
  for (int a = 0; a < n_views; ++a) {
    int acc = det_ids[a];
    for (int b = 0; b < n_views; ++b) {
      if (a == b) continue;
      const int w = weights_for({batch.cameras[a], batch.cameras[b]});
      acc = tape.add(acc, tape.matmul(w, det_ids[b]));
    }
    if (cfg.loss_on_softmax) acc = tape.softmax(acc, cfg.temperature);
    const int diff = tape.sub(acc, tape.leaf(batch.targets[a].template cast<Scalar>()));
    const int sq = tape.sum(tape.mul(diff, diff));
    total = total < 0 ? sq : tape.add(total, sq);
  }
  const double count = static_cast<double>(n_views) * static_cast<double>(batch.detections[0].size());
  const int loss = tape.scale(total, Scalar(1.0 / count));

  Evaluation<Scalar> out{tape.value(loss)(0, 0), {}};
  if (with_grad) {
    auto g = tape.backward(loss);
    out.grads.reserve(leaf_ids.size());
    for (std::size_t k = 0; k < leaf_ids.size(); ++k) {
      MatrixX<Scalar> adj = std::move(g.adjoint[leaf_ids[k]]);
      if (adj.size() == 0) adj = MatrixX<Scalar>::Zero(set.leaves[k].rows(), set.leaves[k].cols());
      out.grads.push_back(std::move(adj));
    }
  }
  return out;
}

Eigen::VectorXd base_column(const Heatmap& base) {
  return Eigen::Map<const Eigen::VectorXd>(base.data(), base.size());
}

Heatmap base_grid(const Eigen::MatrixXd& column, const GridShape& grid) {
  Heatmap h(grid.h, grid.w);
  Eigen::Map<Eigen::VectorXd>(h.data(), h.size()) = column;
  return h;
}

/// Leaves for an ordinary evaluation: pairs with their own tensors get one
/// leaf each, pairs falling back to init_thetas share a single leaf.
struct SharedLayout {
  LeafSet<double> set;
  int init_leaf = -1;
  std::map<int, ViewPair> pair_of_leaf;
};

SharedLayout shared_layout(const FusionParams& params, const std::vector<ViewPair>& pairs) {
  SharedLayout out;
  out.set.kind = kind_of(params);
  if (const auto* dense = std::get_if<DenseFusionParams>(&params)) {
    for (const ViewPair& p : pairs) {
      auto it = dense->weights.find(p);
      if (it == dense->weights.end()) {
        fail(ErrorKind::MissingPairParams,
             "no weights for pair (" + std::to_string(p.target) + " <- " + std::to_string(p.source) + ")");
      }
      out.set.slot[p] = static_cast<int>(out.set.leaves.size());
      out.pair_of_leaf[static_cast<int>(out.set.leaves.size())] = p;
      out.set.leaves.push_back(it->second);
    }
    return out;
  }
  const auto& fac = std::get<FactorizedFusionParams>(params);
  out.set.leaves.push_back(base_column(fac.base));
  for (const ViewPair& p : pairs) {
    if (auto it = fac.thetas.find(p); it != fac.thetas.end()) {
      out.set.slot[p] = static_cast<int>(out.set.leaves.size());
      out.pair_of_leaf[static_cast<int>(out.set.leaves.size())] = p;
      out.set.leaves.push_back(it->second);
    } else {
      if (out.init_leaf < 0) {
        (void)fac.thetas_for(p);  // throws when there is no fallback
        out.init_leaf = static_cast<int>(out.set.leaves.size());
        out.set.leaves.push_back(fac.init_thetas);
      }
      out.set.slot[p] = out.init_leaf;
    }
  }
  return out;
}

void check_batch_matches(const FusionParams& params, const StackedBatch& batch) {
  require(grid_of(params) == batch.grid, ErrorKind::ShapeError, "model and batch grids differ");
}

}  // namespace

StackedBatch stack_batch(std::span<const MultiViewSample> samples) {
  require(!samples.empty(), ErrorKind::ShapeError, "empty batch");
  const MultiViewSample& first = samples.front();
  const int n_views = first.num_views();
  const int n_joints = first.num_joints();
  require(n_views >= 1 && n_joints >= 1, ErrorKind::ShapeError, "sample has no views or joints");

  StackedBatch b;
  b.grid = first.grid;
  b.cameras = first.cameras;
  b.n_samples = static_cast<int>(samples.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(samples.size()) * n_joints;
  b.detections.assign(n_views, Eigen::MatrixXd(first.grid.cells(), cols));
  b.targets.assign(n_views, Eigen::MatrixXd(first.grid.cells(), cols));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const MultiViewSample& x = samples[s];
    require(x.grid == b.grid && x.cameras == b.cameras && x.num_joints() == n_joints, ErrorKind::ShapeError,
            "batch samples must share grid, cameras and joint count");
    for (int v = 0; v < n_views; ++v) {
      b.detections[v].middleCols(static_cast<Eigen::Index>(s) * n_joints, n_joints) = x.views[v];
      b.targets[v].middleCols(static_cast<Eigen::Index>(s) * n_joints, n_joints) = x.gt_heatmaps[v];
    }
  }
  return b;
}

LossAndGrad loss_and_grad(const FusionParams& params, const StackedBatch& batch, const LossConfig& cfg) {
  check_batch_matches(params, batch);
  const SharedLayout layout = shared_layout(params, batch.pairs());
  Evaluation<double> ev = evaluate(layout.set, batch, cfg, true);

  LossAndGrad out;
  out.loss = ev.loss;
  const GridShape grid = grid_of(params);
  if (layout.set.kind == FusionKind::Factorized) out.grad.d_base = base_grid(ev.grads[0], grid);
  for (std::size_t k = 0; k < ev.grads.size(); ++k) {
    const int leaf = static_cast<int>(k);
    if (leaf == layout.init_leaf) {
      out.grad.d_init_thetas = std::move(ev.grads[k]);
    } else if (auto it = layout.pair_of_leaf.find(leaf); it != layout.pair_of_leaf.end()) {
      if (layout.set.kind == FusionKind::Dense) {
        out.grad.d_w[it->second] = std::move(ev.grads[k]);
      } else {
        out.grad.d_thetas[it->second] = std::move(ev.grads[k]);
      }
    }
  }
  return out;
}

LossAndGrad loss_and_grad(const FusionParams& params, std::span<const MultiViewSample> batch,
                          const LossConfig& cfg) {
  return loss_and_grad(params, stack_batch(batch), cfg);
}

double loss_value(const FusionParams& params, const StackedBatch& batch, const LossConfig& cfg) {
  check_batch_matches(params, batch);
  return evaluate(shared_layout(params, batch.pairs()).set, batch, cfg, false).loss;
}

namespace {

/// Task parameters with one theta leaf per direction: [base, theta(a<-b), theta(b<-a)].
LeafSet<double> unrolled_layout(const FactorizedFusionParams& params, const ViewPair& pair) {
  const ViewPair reverse{pair.source, pair.target};
  LeafSet<double> set;
  set.kind = FusionKind::Factorized;
  set.leaves.push_back(base_column(params.base));
  set.leaves.push_back(params.thetas_for(pair));
  set.leaves.push_back(params.thetas_for(reverse));
  set.slot[pair] = 1;
  set.slot[reverse] = 2;
  return set;
}

LeafSet<double> inner_step(const FactorizedFusionParams& params, const LeafSet<double>& start,
                           const StackedBatch& train, double alpha, const LossConfig& cfg) {
  LeafSet<double> adapted = start;
  if (alpha == 0.0) return adapted;
  const Evaluation<double> ev = evaluate(start, train, cfg, true);
  for (std::size_t k = 0; k < adapted.leaves.size(); ++k) {
    if (k == 0 && params.base_frozen) continue;
    adapted.leaves[k] -= alpha * ev.grads[k];
  }
  return adapted;
}

}  // namespace

double meta_objective(const FactorizedFusionParams& params, const Task& task, double alpha,
                      const LossConfig& cfg) {
  require(!task.train_split.empty() && !task.test_split.empty(), ErrorKind::InvalidArgument,
          "task splits must be non-empty");
  const StackedBatch train = stack_batch(task.train_split);
  const StackedBatch test = stack_batch(task.test_split);
  const LeafSet<double> start = unrolled_layout(params, task.pair);
  return evaluate(inner_step(params, start, train, alpha, cfg), test, cfg, false).loss;
}

LossAndGrad meta_grad(const FactorizedFusionParams& params, const Task& task, double alpha,
                      const MetaGradConfig& cfg) {
  require(alpha >= 0.0, ErrorKind::InvalidArgument, "alpha must be non-negative");
  require(!task.train_split.empty() && !task.test_split.empty(), ErrorKind::InvalidArgument,
          "task splits must be non-empty");
  require(params.grid == task.train_split.front().grid, ErrorKind::ShapeError, "model and task grids differ");
  const StackedBatch train = stack_batch(task.train_split);
  const StackedBatch test = stack_batch(task.test_split);

  const LeafSet<double> start = unrolled_layout(params, task.pair);
  const LeafSet<double> adapted = inner_step(params, start, train, alpha, cfg.loss);
  Evaluation<double> outer = evaluate(adapted, test, cfg.loss, true);
  if (params.base_frozen) outer.grads[0].setZero();

  std::vector<Eigen::MatrixXd> meta = outer.grads;
  if (!cfg.first_order && alpha != 0.0) {
    // d/dp L_test(p - alpha g(p)) = (I - alpha H(p)) v with v = grad L_test(p');
    // H v comes from one forward-mode sweep through the train gradient.
    LeafSet<Dual> dual;
    dual.kind = start.kind;
    dual.slot = start.slot;
    for (std::size_t k = 0; k < start.leaves.size(); ++k) {
      MatrixX<Dual> l(start.leaves[k].rows(), start.leaves[k].cols());
      const bool frozen = k == 0 && params.base_frozen;
      for (Eigen::Index e = 0; e < l.size(); ++e) {
        l.data()[e] = Dual(start.leaves[k].data()[e],
                           Eigen::Matrix<double, 1, 1>::Constant(frozen ? 0.0 : outer.grads[k].data()[e]));
      }
      dual.leaves.push_back(std::move(l));
    }
    const Evaluation<Dual> hv = evaluate(dual, train, cfg.loss, true);
    for (std::size_t k = 0; k < meta.size(); ++k) {
      if (k == 0 && params.base_frozen) continue;
      for (Eigen::Index e = 0; e < meta[k].size(); ++e) {
        meta[k].data()[e] -= alpha * hv.grads[k].data()[e].derivatives()(0);
      }
    }
  }

  LossAndGrad out;
  out.loss = outer.loss;
  out.grad.d_base = base_grid(meta[0], params.grid);
  const ViewPair pair = task.pair;
  const ViewPair reverse{pair.source, pair.target};
  for (const auto& [p, k] : {std::pair{pair, 1}, std::pair{reverse, 2}}) {
    if (params.thetas.count(p) > 0) {
      out.grad.d_thetas[p] = meta[k];
    } else if (out.grad.d_init_thetas.size() == 0) {
      out.grad.d_init_thetas = meta[k];
    } else {
      out.grad.d_init_thetas += meta[k];
    }
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_tensor(const FusionParams& params, const ParamMask& mask, Fn&& fn) {
  if (const auto* dense = std::get_if<DenseFusionParams>(&params)) {
    if (!mask.pair_tensors) return;
    for (const auto& [pair, w] : dense->weights) fn(0, pair, w.size());
    return;
  }
  const auto& fac = std::get<FactorizedFusionParams>(params);
  if (mask.base) fn(1, ViewPair{}, fac.base.size());
  if (mask.init_thetas && fac.init_thetas.size() > 0) fn(2, ViewPair{}, fac.init_thetas.size());
  if (mask.pair_tensors) {
    for (const auto& [pair, t] : fac.thetas) fn(0, pair, t.size());
  }
}

}  // namespace

Eigen::VectorXd flatten(const FusionParams& params, const ParamMask& mask) {
  Eigen::Index n = 0;
  for_each_tensor(params, mask, [&](int, const ViewPair&, Eigen::Index size) { n += size; });
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for_each_tensor(params, mask, [&](int which, const ViewPair& pair, Eigen::Index size) {
    const double* src = nullptr;
    if (const auto* dense = std::get_if<DenseFusionParams>(&params)) {
      src = dense->weights.at(pair).data();
    } else {
      const auto& fac = std::get<FactorizedFusionParams>(params);
      src = which == 1 ? fac.base.data() : which == 2 ? fac.init_thetas.data() : fac.thetas.at(pair).data();
    }
    out.segment(at, size) = Eigen::Map<const Eigen::VectorXd>(src, size);
    at += size;
  });
  return out;
}

void unflatten(FusionParams& params, const Eigen::VectorXd& flat, const ParamMask& mask) {
  Eigen::Index n = 0;
  for_each_tensor(params, mask, [&](int, const ViewPair&, Eigen::Index size) { n += size; });
  require(flat.size() == n, ErrorKind::ShapeError, "flat parameter vector has the wrong length");
  Eigen::Index at = 0;
  for_each_tensor(params, mask, [&](int which, const ViewPair& pair, Eigen::Index size) {
    double* dst = nullptr;
    if (auto* dense = std::get_if<DenseFusionParams>(&params)) {
      dst = dense->weights.at(pair).data();
    } else {
      auto& fac = std::get<FactorizedFusionParams>(params);
      dst = which == 1 ? fac.base.data() : which == 2 ? fac.init_thetas.data() : fac.thetas.at(pair).data();
    }
    Eigen::Map<Eigen::VectorXd>(dst, size) = flat.segment(at, size);
    at += size;
  });
}

Eigen::VectorXd flatten(const GradientBundle& grad, const FusionParams& like, const ParamMask& mask) {
  Eigen::Index n = 0;
  for_each_tensor(like, mask, [&](int, const ViewPair&, Eigen::Index size) { n += size; });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  Eigen::Index at = 0;
  const bool dense = kind_of(like) == FusionKind::Dense;
  for_each_tensor(like, mask, [&](int which, const ViewPair& pair, Eigen::Index size) {
    const double* src = nullptr;
    Eigen::Index have = 0;
    if (which == 1) {
      src = grad.d_base.data();
      have = grad.d_base.size();
    } else if (which == 2) {
      src = grad.d_init_thetas.data();
      have = grad.d_init_thetas.size();
    } else {
      const auto& m = dense ? grad.d_w : grad.d_thetas;
      if (auto it = m.find(pair); it != m.end()) {
        src = it->second.data();
        have = it->second.size();
      }
    }
    if (src != nullptr && have == size) out.segment(at, size) = Eigen::Map<const Eigen::VectorXd>(src, size);
    at += size;
  });
  return out;
}

}  // namespace fuselab
