#include "fuselab/fusion.hpp"

#include <string>

#include "fuselab/error.hpp"

namespace fuselab {

namespace {

std::string describe(const ViewPair& p) {
  return "(" + std::to_string(p.target) + " <- " + std::to_string(p.source) + ")";
}

}  // namespace

Heatmap warp_affine(const Heatmap& base, const Theta& theta) {
  const GridShape grid{static_cast<int>(base.rows()), static_cast<int>(base.cols())};
  validate(grid);
  require(theta.allFinite(), ErrorKind::InvalidArgument, "theta must be finite");
  const Eigen::MatrixXd thetas = theta.transpose();
  const Eigen::MatrixXd row = warp_rows<double>(base.data(), thetas, grid);
  Heatmap out(grid.h, grid.w);
  Eigen::Map<Eigen::RowVectorXd>(out.data(), grid.cells()) = row.row(0);
  return out;
}

bool FactorizedFusionParams::has_pair(const ViewPair& pair) const {
  return thetas.count(pair) > 0 || init_thetas.size() > 0;
}

const Eigen::MatrixXd& FactorizedFusionParams::thetas_for(const ViewPair& pair) const {
  if (auto it = thetas.find(pair); it != thetas.end()) return it->second;
  if (init_thetas.size() > 0) return init_thetas;
  fail(ErrorKind::MissingPairParams, "no thetas for pair " + describe(pair));
}

const GridShape& grid_of(const FusionParams& p) {
  return std::visit([](const auto& v) -> const GridShape& { return v.grid; }, p);
}

DenseFusionParams make_dense(const GridShape& grid, const std::vector<ViewPair>& pairs) {
  validate(grid);
  DenseFusionParams p;
  p.grid = grid;
  for (const ViewPair& pair : pairs) p.weights[pair] = Eigen::MatrixXd::Zero(grid.cells(), grid.cells());
  return p;
}

FactorizedFusionParams make_factorized(const GridShape& grid, const std::vector<ViewPair>& pairs,
                                       std::uint64_t seed, double base_scale, double theta_noise) {
  validate(grid);
  RngState rng = make_stream(seed, 0xfac7);
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorizedFusionParams p;
  p.grid = grid;
  p.base.resize(grid.h, grid.w);
  for (Eigen::Index k = 0; k < p.base.size(); ++k) p.base.data()[k] = base_scale * normal(rng);
  p.init_thetas.resize(grid.cells(), 6);
  const Theta id = identity_theta();
  for (int i = 0; i < grid.cells(); ++i) {
    for (int k = 0; k < 6; ++k) p.init_thetas(i, k) = id(k) + theta_noise * normal(rng);
  }
  for (const ViewPair& pair : pairs) p.thetas[pair] = p.init_thetas;
  return p;
}

Eigen::MatrixXd materialize(const FusionParams& params, const ViewPair& pair) {
  if (const auto* dense = std::get_if<DenseFusionParams>(&params)) {
    auto it = dense->weights.find(pair);
    if (it == dense->weights.end()) fail(ErrorKind::MissingPairParams, "no weights for pair " + describe(pair));
    return it->second;
  }
  const auto& fac = std::get<FactorizedFusionParams>(params);
  return warp_rows<double>(fac.base.data(), fac.thetas_for(pair), fac.grid);
}

DenseFusionParams materialize_dense(const FactorizedFusionParams& params,
                                    const std::vector<ViewPair>& pairs) {
  DenseFusionParams out;
  out.grid = params.grid;
  for (const ViewPair& pair : pairs) out.weights[pair] = materialize(FusionParams{params}, pair);
  return out;
}

Heatmap fuse_pair(const Heatmap& target, const Heatmap& source, const Eigen::MatrixXd& weights) {
  require(target.rows() == source.rows() && target.cols() == source.cols(), ErrorKind::ShapeError,
          "target and source grids differ");
  require(weights.rows() == target.size() && weights.cols() == source.size(), ErrorKind::ShapeError,
          "weight matrix does not match the grids");
  Heatmap out = target;
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) +=
      weights * Eigen::Map<const Eigen::VectorXd>(source.data(), source.size());
  return out;
}

MultiViewSample fuse_multiview(const MultiViewSample& sample, const FusionParams& params,
                               const FuseConfig& cfg) {
  require(grid_of(params) == sample.grid, ErrorKind::ShapeError, "model and sample grids differ");
  MultiViewSample out = sample;
  const int n_views = sample.num_views();
  for (int a = 0; a < n_views; ++a) {
    HeatmapStack acc = sample.views[a];
    for (int b = 0; b < n_views; ++b) {
      if (a == b) continue;
      const Eigen::MatrixXd w = materialize(params, {sample.cameras[a], sample.cameras[b]});
      acc.noalias() += w * sample.views[b];
    }
    out.views[a] = cfg.apply_softmax ? softmax_temperature_stack(acc, cfg.temperature) : acc;
  }
  return out;
}

std::int64_t param_count(FusionKind kind, const GridShape& grid, int n_pairs) {
  validate(grid);
  const std::int64_t z = grid.cells();
  if (kind == FusionKind::Dense) return static_cast<std::int64_t>(n_pairs) * z * z;
  return z + static_cast<std::int64_t>(n_pairs) * 6 * z;
}

std::int64_t param_count(const FusionParams& params, const GridShape& grid, int n_pairs) {
  return param_count(kind_of(params), grid, n_pairs);
}

std::int64_t finetune_param_count(const GridShape& grid) {
  validate(grid);
  return 6 * static_cast<std::int64_t>(grid.cells());
}

}  // namespace fuselab
