#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <type_traits>
#include <variant>

#include <Eigen/Core>

#include "fuselab/core.hpp"
#include "fuselab/heatmap.hpp"
#include "fuselab/synthworld.hpp"

namespace fuselab {

/// Plain value of a scalar; overloaded for forward-mode scalars.
inline double scalar_value(double x) { return x; }
template <typename T>
double scalar_value(const T& x) {
  return x.value();
}

/// Affine parameters [a, b, tx, c, d, ty] acting on normalized coordinates
/// in [-1, 1]^2 (corner cell centers at +-1): an output cell at g samples the
/// base at (a gx + b gy + tx, c gx + d gy + ty).
using Theta = Eigen::Matrix<double, 6, 1>;

inline Theta identity_theta() {
  Theta t;
  t << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  return t;
}

/// Bilinear sample of a row-major h x w field at continuous index coordinates
/// (x = column, y = row), zero outside.
template <typename Scalar>
Scalar bilinear_sample(const Scalar* base, const GridShape& grid, const Scalar& x, const Scalar& y) {
  const double xv = std::floor(scalar_value(x));
  const double yv = std::floor(scalar_value(y));
  const int x0 = static_cast<int>(xv);
  const int y0 = static_cast<int>(yv);
  const Scalar fx = x - xv;
  const Scalar fy = y - yv;
  auto tap = [&](int r, int c) -> Scalar {
    if (r < 0 || c < 0 || r >= grid.h || c >= grid.w) return Scalar(0.0);
    return base[r * grid.w + c];
  };
  const Scalar top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1);
  const Scalar bottom = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bottom;
}

inline double normalized_coord(int index, int extent) {
  return 2.0 * index / (extent - 1) - 1.0;
}

/// Warps `base` (h*w values, row-major) by every row of `thetas` (n x 6).
/// Row i of the result is the flattened warp for theta_i.
template <typename Scalar>
MatrixX<Scalar> warp_rows(const Scalar* base, const MatrixX<Scalar>& thetas, const GridShape& grid) {
  const int cells = grid.cells();
  const double sx = 0.5 * (grid.w - 1);
  const double sy = 0.5 * (grid.h - 1);
  MatrixX<Scalar> out(thetas.rows(), cells);
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
    const auto th = thetas.row(i);
    for (int r = 0; r < grid.h; ++r) {
      const double gy = normalized_coord(r, grid.h);
      for (int c = 0; c < grid.w; ++c) {
        const double gx = normalized_coord(c, grid.w);
        const Scalar x = (th(0) * gx + th(1) * gy + th(2) + 1.0) * sx;
        const Scalar y = (th(3) * gx + th(4) * gy + th(5) + 1.0) * sy;
        out(i, r * grid.w + c) = bilinear_sample(base, grid, x, y);
      }
    }
  }
  return out;
}

/// Vector-Jacobian product of `warp_rows`: accumulates d(base) (h*w) and
/// d(thetas) (n x 6) for output adjoint `grad_out` (n x h*w).
template <typename Scalar>
void warp_rows_backward(const Scalar* base, const MatrixX<Scalar>& thetas, const GridShape& grid,
                        const MatrixX<Scalar>& grad_out, Scalar* grad_base, MatrixX<Scalar>* grad_thetas) {
  const double sx = 0.5 * (grid.w - 1);
  const double sy = 0.5 * (grid.h - 1);
  auto tap = [&](int r, int c) -> Scalar {
    if (r < 0 || c < 0 || r >= grid.h || c >= grid.w) return Scalar(0.0);
    return base[r * grid.w + c];
  };
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
    const auto th = thetas.row(i);
    Scalar dth[6] = {Scalar(0.0), Scalar(0.0), Scalar(0.0), Scalar(0.0), Scalar(0.0), Scalar(0.0)};
    for (int r = 0; r < grid.h; ++r) {
      const double gy = normalized_coord(r, grid.h);
      for (int c = 0; c < grid.w; ++c) {
        const Scalar g = grad_out(i, r * grid.w + c);
        if constexpr (std::is_same_v<Scalar, double>) {
          if (g == 0.0) continue;
        }
        const double gx = normalized_coord(c, grid.w);
        const Scalar x = (th(0) * gx + th(1) * gy + th(2) + 1.0) * sx;
        const Scalar y = (th(3) * gx + th(4) * gy + th(5) + 1.0) * sy;
        const double xv = std::floor(scalar_value(x));
        const double yv = std::floor(scalar_value(y));
        const int x0 = static_cast<int>(xv);
        const int y0 = static_cast<int>(yv);
        const Scalar fx = x - xv;
        const Scalar fy = y - yv;
        const Scalar b00 = tap(y0, x0), b01 = tap(y0, x0 + 1);
        const Scalar b10 = tap(y0 + 1, x0), b11 = tap(y0 + 1, x0 + 1);
        if (grad_base != nullptr) {
          auto add = [&](int rr, int cc, const Scalar& wgt) {
            if (rr < 0 || cc < 0 || rr >= grid.h || cc >= grid.w) return;
            grad_base[rr * grid.w + cc] += g * wgt;
          };
          add(y0, x0, (1.0 - fx) * (1.0 - fy));
          add(y0, x0 + 1, fx * (1.0 - fy));
          add(y0 + 1, x0, (1.0 - fx) * fy);
          add(y0 + 1, x0 + 1, fx * fy);
        }
        if (grad_thetas != nullptr) {
          const Scalar dvdx = ((1.0 - fy) * (b01 - b00) + fy * (b11 - b10)) * g * sx;
          const Scalar dvdy = ((1.0 - fx) * (b10 - b00) + fx * (b11 - b01)) * g * sy;
          dth[0] += dvdx * gx;
          dth[1] += dvdx * gy;
          dth[2] += dvdx;
          dth[3] += dvdy * gx;
          dth[4] += dvdy * gy;
          dth[5] += dvdy;
        }
      }
    }
    if (grad_thetas != nullptr) {
      for (int k = 0; k < 6; ++k) (*grad_thetas)(i, k) += dth[k];
    }
  }
}

/// Single-map warp.
Heatmap warp_affine(const Heatmap& base, const Theta& theta);

/// Dense pairwise weights. weights[pair](i, j) connects source cell j of
/// pair.source to target cell i of pair.target.
struct DenseFusionParams {
  GridShape grid;
  std::map<ViewPair, Eigen::MatrixXd> weights;
};

/// Shared base map plus per-cell affine parameters per ordered pair.
/// `init_thetas` stands in for any pair without its own set (the
/// meta-learned initialization).
struct FactorizedFusionParams {
  GridShape grid;
  Heatmap base;
  Eigen::MatrixXd init_thetas;  // |Z| x 6, may be empty
  std::map<ViewPair, Eigen::MatrixXd> thetas;
  bool base_frozen = false;

  bool has_pair(const ViewPair& pair) const;
  /// Throws MissingPairParams when neither a pair set nor init_thetas exist.
  const Eigen::MatrixXd& thetas_for(const ViewPair& pair) const;
};

using FusionParams = std::variant<DenseFusionParams, FactorizedFusionParams>;

enum class FusionKind { Dense, Factorized };

inline FusionKind kind_of(const FusionParams& p) {
  return std::holds_alternative<DenseFusionParams>(p) ? FusionKind::Dense : FusionKind::Factorized;
}

const GridShape& grid_of(const FusionParams& p);

/// Zero weights for every pair (the No-Fusion model).
DenseFusionParams make_dense(const GridShape& grid, const std::vector<ViewPair>& pairs);

/// Random initialization: near-identity thetas (std `theta_noise`) and a
/// small random base (std `base_scale`). Pairs get their own copies of the
/// shared initial set.
FactorizedFusionParams make_factorized(const GridShape& grid, const std::vector<ViewPair>& pairs,
                                       std::uint64_t seed, double base_scale = 0.01,
                                       double theta_noise = 0.01);

/// The weight matrix (|Z| x |Z|) used for `pair`.
Eigen::MatrixXd materialize(const FusionParams& params, const ViewPair& pair);

/// Dense model with the warped weights of `params` for `pairs`.
DenseFusionParams materialize_dense(const FactorizedFusionParams& params, const std::vector<ViewPair>& pairs);

/// out_i = target_i + sum_j weights(i, j) source_j.
Heatmap fuse_pair(const Heatmap& target, const Heatmap& source, const Eigen::MatrixXd& weights);

struct FuseConfig {
  bool apply_softmax = false;
  double temperature = 0.2;
};

/// Fuses every view of `sample` with contributions from all its other views.
MultiViewSample fuse_multiview(const MultiViewSample& sample, const FusionParams& params,
                               const FuseConfig& cfg = {});

/// Learnable parameters: dense n_pairs |Z|^2, factorized |Z| + 6 n_pairs |Z|.
std::int64_t param_count(FusionKind kind, const GridShape& grid, int n_pairs);
std::int64_t param_count(const FusionParams& params, const GridShape& grid, int n_pairs);
/// Parameters updated while adapting one direction of a new pair: 6 H W.
std::int64_t finetune_param_count(const GridShape& grid);

}  // namespace fuselab
