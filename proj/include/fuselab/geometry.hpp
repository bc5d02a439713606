#pragma once

#include <span>

#include <Eigen/Dense>

#include "fuselab/core.hpp"

namespace fuselab {

using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Square-pixel, zero-skew pinhole camera. `rotation` maps world to camera
/// axes; a world point P has camera coordinates rotation * (P - center).
struct Camera {
  double focal = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  Mat3 rotation = Mat3::Identity();
  Point3 center = Point3::Zero();

  Mat3 intrinsics() const;
  Mat34 projection_matrix() const;
};

/// Checks focal > 0 and R^T R = I within 1e-9; throws InvalidArgument.
void validate(const Camera& cam);
/// Additionally requires the principal point inside the grid.
void validate(const Camera& cam, const GridShape& grid);

/// Camera at `center` looking at `target`; `up` regularizes roll and is
/// replaced when nearly parallel to the viewing direction.
Camera look_at(const Point3& center, const Point3& target, double focal,
               const Eigen::Vector2d& principal_point,
               const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());

inline constexpr double kMinDepth = 1e-9;

double depth(const Camera& cam, const Point3& p);
Pixel project(const Camera& cam, const Point3& p);

struct FundamentalMatrix {
  Mat3 m = Mat3::Zero();
};

/// F with x2^T F x1 = 0, unit Frobenius norm.
FundamentalMatrix fundamental_from_cameras(const Camera& cam1, const Camera& cam2);

/// Line in view 2 on which the correspondence of `x1` lies, a^2 + b^2 = 1.
Line2 epipolar_line(const FundamentalMatrix& f, const Pixel& x1);

inline double point_line_distance(const Line2& line, const Pixel& p) {
  return std::abs(line.x() * p.x() + line.y() * p.y() + line.z());
}

inline constexpr double kMaxDltCondition = 1e12;

/// Linear triangulation from >= 2 views (SVD of the stacked DLT system with
/// unit-norm rows).
Point3 triangulate_dlt(std::span<const Camera> cams, std::span<const Pixel> pixels);

/// Ground-truth fusion weights for target cell `target_cell` of view 1: a
/// Gaussian band of width `sigma` around its epipolar line in view 2,
/// normalized to unit mass.
Heatmap ideal_fusion_weight(const FundamentalMatrix& f, int target_cell,
                                    const GridShape& grid, double sigma = 1.5);

}  // namespace fuselab
