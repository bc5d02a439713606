#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fuselab/error.hpp"
#include "fuselab/objective.hpp"
#include "fuselab/synthworld.hpp"
#include "fuselab/train.hpp"

using namespace fuselab;

namespace {

WorldConfig tiny_world() {
  WorldConfig cfg;
  cfg.n_cams = 4;
  cfg.n_test_cams = 2;
  cfg.grid = {8, 8};
  cfg.n_joints = 3;
  cfg.heatmap_sigma = 1.0;
  cfg.seed = 5;
  return cfg;
}

TrainConfig fast_train() {
  TrainConfig t;
  t.k = 4;
  t.meta_iterations = 6;
  t.finetune_steps = 20;
  t.batch_size = 4;
  t.seed = 3;
  t.inner_lr = 1e-2;
  t.outer_lr = 1e-2;
  t.finetune_lr = 1e-2;
  return t;
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same(const FactorizedFusionParams& a, const FactorizedFusionParams& b) {
  if (!same(a.base, b.base) || !same(a.init_thetas, b.init_thetas) || a.thetas.size() != b.thetas.size()) return false;
  for (const auto& [pair, th] : a.thetas) {
    auto it = b.thetas.find(pair);
    if (it == b.thetas.end() || !same(th, it->second)) return false;
  }
  return true;
}

struct Fixture {
  WorldConfig world = tiny_world();
  Rig rig = make_world_rig(world);
  std::vector<MultiViewSample> pair_data = generate_samples(rig, {4, 5}, 16, world, world.seed, 77);
  std::vector<Task> tasks = sample_tasks(sub_rig(rig, {0, 1, 2, 3}), 6, 4, world, world.seed);
};

}  // namespace

TEST_CASE("adam: three steps against a reference trajectory") {
  OptimState s = make_optimizer(OptimKind::Adam, 0.01, 3);
  Eigen::VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  const double expected[3][3] = {{0.9900000009999999, -1.9900000003333334, 0.49000000005},
                                 {0.9803481813521252, -1.9800000006666667, 0.480678203720851},
                                 {0.9707681695544842, -1.970000001, 0.47194661850228964}};
  for (int t = 1; t <= 3; ++t) {
    Eigen::VectorXd g(3);
    g << 0.1 * t, -0.3, 2.0 / t;
    adam_step(s, p, g);
    for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(expected[t - 1][i]).epsilon(1e-13));
  }
  CHECK(s.step == 3);
}

TEST_CASE("adam: zero gradient leaves parameters in place") {
  OptimState s = make_optimizer(OptimKind::Adam, 0.1, 4);
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0);
  const Eigen::VectorXd before = p;
  for (int t = 0; t < 5; ++t) adam_step(s, p, Eigen::VectorXd::Zero(4));
  CHECK(same(p, before));
}

TEST_CASE("adam: the first step moves each coordinate by at most lr") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    OptimState s = make_optimizer(OptimKind::Adam, 0.05, 16);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(16);
    Eigen::VectorXd g(16);
    for (int i = 0; i < 16; ++i) g(i) = n(rng);
    adam_step(s, p, g);
    CHECK(p.cwiseAbs().maxCoeff() <= 0.05 * (1.0 + 1e-12));
    for (int i = 0; i < 16; ++i) {
      if (std::abs(g(i)) > 1e-3) CHECK(p(i) * g(i) < 0.0);
    }
  }
}

TEST_CASE("adam: empty moments start at zero, size mismatch throws") {
  OptimState s;
  s.lr = 0.1;
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  adam_step(s, p, Eigen::VectorXd::Constant(2, 3.0));
  CHECK(s.m.size() == 2);
  CHECK(p(0) == doctest::Approx(0.9));
  Eigen::VectorXd wrong = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(adam_step(s, p, wrong), Error);
}

TEST_CASE("sgd step") {
  OptimState s = make_optimizer(OptimKind::Sgd, 0.5, 2);
  Eigen::VectorXd p(2), g(2);
  p << 1.0, 2.0;
  g << 2.0, -2.0;
  optimizer_step(s, p, g);
  CHECK(p(0) == 0.0);
  CHECK(p(1) == 3.0);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(validate(t));
  auto kind_of_failure = [](TrainConfig c) {
    try {
      validate(c);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  t.outer_lr = 0.0;
  CHECK(kind_of_failure(t) == ErrorKind::InvalidArgument);
  t = {};
  t.k = 0;
  CHECK(kind_of_failure(t) == ErrorKind::InvalidArgument);
  t = {};
  t.inner_lr = -1.0;
  CHECK(kind_of_failure(t) == ErrorKind::InvalidArgument);
  t = {};
  t.temperature = 0.0;
  CHECK(kind_of_failure(t) == ErrorKind::InvalidTemperature);
}

TEST_CASE("train_supervised: overfits a single sample") {
  Fixture fx;
  const std::vector<MultiViewSample> one{fx.pair_data[0]};
  TrainConfig t = fast_train();
  t.supervised_lr = 1e-2;
  t.epochs = 200;
  const FusionParams init = make_dense(fx.world.grid, ordered_pairs({4, 5}));
  const double before = loss_value(init, stack_batch(one));
  const FusionParams trained = train_supervised(init, one, t);
  const double after = loss_value(trained, stack_batch(one));
  CHECK(after < 0.2 * before);
}

TEST_CASE("train_supervised: zero epochs is a no-op, empty data throws, runs are deterministic") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.epochs = 0;
  const FusionParams init = make_factorized(fx.world.grid, ordered_pairs({4, 5}), 1);
  const FusionParams same_params = train_supervised(init, fx.pair_data, t);
  CHECK(same(std::get<FactorizedFusionParams>(same_params), std::get<FactorizedFusionParams>(init)));
  CHECK_THROWS_AS(train_supervised(init, {}, t), Error);

  t.epochs = 2;
  const auto a = std::get<FactorizedFusionParams>(train_supervised(init, fx.pair_data, t));
  const auto b = std::get<FactorizedFusionParams>(train_supervised(init, fx.pair_data, t));
  CHECK(same(a, b));
  CHECK_FALSE(same(a, std::get<FactorizedFusionParams>(init)));
}

TEST_CASE("finetune: adapts thetas of the data's pairs only and never the base") {
  Fixture fx;
  FactorizedFusionParams meta = make_factorized(fx.world.grid, {}, 2, 0.05, 0.01);
  meta.base_frozen = true;
  const TrainConfig t = fast_train();
  const StackedBatch batch = stack_batch(fx.pair_data);
  const FactorizedFusionParams adapted = finetune(meta, fx.pair_data, t);

  CHECK(same(adapted.base, meta.base));
  CHECK(same(adapted.init_thetas, meta.init_thetas));
  CHECK(adapted.thetas.size() == 2);
  CHECK(adapted.has_pair({4, 5}));
  CHECK(adapted.has_pair({5, 4}));
  CHECK(loss_value(adapted, batch) < loss_value(meta, batch));
}

TEST_CASE("finetune: empty data returns the input, dense params are rejected") {
  Fixture fx;
  const FactorizedFusionParams meta = make_factorized(fx.world.grid, {}, 2);
  CHECK(same(finetune(meta, {}, fast_train()), meta));
  const FusionParams dense = make_dense(fx.world.grid, ordered_pairs({4, 5}));
  try {
    finetune(dense, fx.pair_data, fast_train());
    FAIL("expected WrongModelKind");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WrongModelKind);
  }
}

TEST_CASE("finetune_dense: missing pairs start from zero") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.finetune_steps = 0;
  const DenseFusionParams empty{fx.world.grid, {}};
  const DenseFusionParams zero = finetune_dense(empty, fx.pair_data, t);
  REQUIRE(zero.weights.size() == 2);
  for (const auto& [pair, w] : zero.weights) CHECK(w.isZero(0.0));

  t.finetune_steps = 30;
  const DenseFusionParams trained = finetune_dense(empty, fx.pair_data, t);
  const StackedBatch batch = stack_batch(fx.pair_data);
  CHECK(loss_value(trained, batch) < loss_value(zero, batch));
}

TEST_CASE("meta_train: zero iterations returns the initialization with the base frozen") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.meta_iterations = 0;
  const FactorizedFusionParams init = make_factorized(fx.world.grid, {}, 4);
  FactorizedFusionParams out = meta_train(init, fx.tasks, t);
  CHECK(out.base_frozen);
  out.base_frozen = init.base_frozen;
  CHECK(same(out, init));
}

TEST_CASE("meta_train: no tasks") {
  const FactorizedFusionParams init = make_factorized({8, 8}, {}, 4);
  try {
    meta_train(init, {}, fast_train());
    FAIL("expected NoTasks");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoTasks);
  }
}

TEST_CASE("meta_train: deterministic, one log row per iteration, lowers the meta-objective") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.meta_iterations = 30;
  const FactorizedFusionParams init = make_factorized(fx.world.grid, {}, 4);
  std::vector<MetaLogRow> rows;
  const FactorizedFusionParams a = meta_train(init, fx.tasks, t, [&](const MetaLogRow& r) { rows.push_back(r); });
  const FactorizedFusionParams b = meta_train(init, fx.tasks, t);
  CHECK(same(a, b));
  REQUIRE(rows.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(rows[i].iteration == i);

  double before = 0.0, after = 0.0;
  for (const Task& task : fx.tasks) {
    before += meta_objective(init, task, t.inner_lr);
    after += meta_objective(a, task, t.inner_lr);
  }
  CHECK(after < before);
}

TEST_CASE("meta_train_run: stopping and resuming matches an uninterrupted run bitwise") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.meta_iterations = 9;
  const FactorizedFusionParams init = make_factorized(fx.world.grid, {}, 4);

  MetaTrainState full = meta_train_start(init, t);
  meta_train_run(full, fx.tasks, t, 9);

  MetaTrainState part = meta_train_start(init, t);
  meta_train_run(part, fx.tasks, t, 4);
  CHECK(part.iteration == 4);
  MetaTrainState resumed = part;
  meta_train_run(resumed, fx.tasks, t, 9);

  CHECK(resumed.iteration == 9);
  CHECK(resumed.optim.step == full.optim.step);
  CHECK(same(resumed.params, full.params));
  CHECK(same(resumed.optim.m, full.optim.m));
  CHECK(same(resumed.optim.v, full.optim.v));
}

TEST_CASE("meta_train: first-order and second-order runs differ but both stay finite") {
  Fixture fx;
  TrainConfig t = fast_train();
  t.inner_lr = 0.5;
  const FactorizedFusionParams init = make_factorized(fx.world.grid, {}, 4);
  const FactorizedFusionParams second = meta_train(init, fx.tasks, t);
  t.first_order = true;
  const FactorizedFusionParams first = meta_train(init, fx.tasks, t);
  CHECK(second.base.allFinite());
  CHECK(first.base.allFinite());
  CHECK_FALSE(same(first.base, second.base));
}
