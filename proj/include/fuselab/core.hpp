#pragma once

#include <Eigen/Core>

namespace fuselab {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// h x w scalar field, one joint channel. Row-major so that the flat cell
/// index r * w + c matches `data()` order.
template <typename Scalar>
using HeatmapT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Heatmap = HeatmapT<double>;

/// Continuous position in heatmap-grid units; cell (r, c) has its center at
/// (c + 0.5, r + 0.5).
using Pixel = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;
/// Homogeneous line ax + by + c = 0 with a^2 + b^2 = 1.
using Line2 = Eigen::Vector3d;

struct GridShape {
  int h = 0;
  int w = 0;

  int cells() const { return h * w; }
  bool operator==(const GridShape&) const = default;
};

/// Throws ShapeError unless h, w >= 2.
void validate(const GridShape& shape);

inline Pixel cell_center(const GridShape& shape, int index) {
  return {index % shape.w + 0.5, index / shape.w + 0.5};
}

inline bool on_grid(const GridShape& shape, const Pixel& p) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() < shape.w && p.y() < shape.h;
}

}  // namespace fuselab
