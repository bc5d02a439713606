#include "fuselab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fuselab/error.hpp"

namespace fuselab {

void validate(const GridShape& shape) {
  require(shape.h >= 2 && shape.w >= 2, ErrorKind::ShapeError,
          "grid must be at least 2x2, got " + std::to_string(shape.h) + "x" +
              std::to_string(shape.w));
}

Mat3 Camera::intrinsics() const {
  Mat3 k;
  k << focal, 0.0, principal_point.x(),
       0.0, focal, principal_point.y(),
       0.0, 0.0, 1.0;
  return k;
}

Mat34 Camera::projection_matrix() const {
  Mat34 rt;
  rt.leftCols<3>() = rotation;
  rt.col(3) = -rotation * center;
  return intrinsics() * rt;
}

void validate(const Camera& cam) {
  require(std::isfinite(cam.focal) && cam.focal > 0.0, ErrorKind::InvalidArgument,
          "camera focal must be positive");
  const double err = (cam.rotation.transpose() * cam.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  require(err < 1e-9, ErrorKind::InvalidArgument, "camera rotation is not orthonormal");
  require(cam.center.allFinite() && cam.principal_point.allFinite(), ErrorKind::InvalidArgument,
          "camera has non-finite fields");
}

void validate(const Camera& cam, const GridShape& grid) {
  validate(cam);
  require(on_grid(grid, cam.principal_point), ErrorKind::InvalidArgument,
          "principal point outside the grid");
}

Camera look_at(const Point3& center, const Point3& target, double focal,
               const Eigen::Vector2d& principal_point, const Eigen::Vector3d& up) {
  const Eigen::Vector3d forward = (target - center).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-6) {
    right = forward.cross(Eigen::Vector3d::UnitY());
  }
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);

  Camera cam;
  cam.focal = focal;
  cam.principal_point = principal_point;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.center = center;
  validate(cam);
  return cam;
}

double depth(const Camera& cam, const Point3& p) {
  return cam.rotation.row(2).dot(p - cam.center);
}

Pixel project(const Camera& cam, const Point3& p) {
  const Eigen::Vector3d pc = cam.rotation * (p - cam.center);
  if (!(pc.z() > kMinDepth)) {
    fail(ErrorKind::BehindCamera, "point has depth " + std::to_string(pc.z()));
  }
  return cam.focal * pc.head<2>() / pc.z() + cam.principal_point;
}

namespace {

Mat3 skew(const Eigen::Vector3d& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

FundamentalMatrix fundamental_from_cameras(const Camera& cam1, const Camera& cam2) {
  require((cam1.center - cam2.center).norm() > 1e-9, ErrorKind::DegenerateRig,
          "camera centers coincide");
  // x_cam2 = R x_cam1 + t
  const Mat3 r = cam2.rotation * cam1.rotation.transpose();
  const Eigen::Vector3d t = cam2.rotation * (cam1.center - cam2.center);
  const Mat3 essential = skew(t) * r;
  FundamentalMatrix f;
  f.m = cam2.intrinsics().inverse().transpose() * essential * cam1.intrinsics().inverse();
  f.m /= f.m.norm();
  return f;
}

Line2 epipolar_line(const FundamentalMatrix& f, const Pixel& x1) {
  Line2 line = f.m * x1.homogeneous();
  const double n = line.head<2>().norm();
  if (n < 1e-12) {
    fail(ErrorKind::EpipoleDegenerate, "pixel coincides with the epipole");
  }
  return line / n;
}

Point3 triangulate_dlt(std::span<const Camera> cams, std::span<const Pixel> pixels) {
  require(cams.size() == pixels.size(), ErrorKind::ShapeError,
          "camera and pixel counts differ");
  require(cams.size() >= 2, ErrorKind::InsufficientViews, "triangulation needs >= 2 views");

  double spread = 0.0;
  for (const Camera& c : cams) spread = std::max(spread, (c.center - cams[0].center).norm());
  require(spread > 1e-9, ErrorKind::DegenerateRig, "all camera centers coincide");

  Eigen::MatrixXd a(2 * cams.size(), 4);
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const Mat34 p = cams[v].projection_matrix();
    a.row(2 * v) = pixels[v].x() * p.row(2) - p.row(0);
    a.row(2 * v + 1) = pixels[v].y() * p.row(2) - p.row(1);
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double n = a.row(r).norm();
    if (n > 0.0) a.row(r) /= n;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d s = svd.singularValues().head<4>();
  // The solution is the null direction; the system is only well posed when
  // the remaining three directions are well separated from zero.
  const double cond = s(2) > 0.0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
  if (cond > kMaxDltCondition) {
    fail(ErrorKind::IllConditioned, "DLT condition number " + std::to_string(cond));
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-14) {
    fail(ErrorKind::IllConditioned, "triangulated point at infinity");
  }
  return x.head<3>() / x(3);
}

Heatmap ideal_fusion_weight(const FundamentalMatrix& f, int target_cell, const GridShape& grid,
                            double sigma) {
  validate(grid);
  require(sigma > 0.0, ErrorKind::InvalidArgument, "sigma must be positive");
  require(target_cell >= 0 && target_cell < grid.cells(), ErrorKind::ShapeError,
          "target cell out of range");
  const Line2 line = epipolar_line(f, cell_center(grid, target_cell));

  Eigen::ArrayXd d2(grid.cells());
  for (int j = 0; j < grid.cells(); ++j) {
    const double d = point_line_distance(line, cell_center(grid, j));
    d2(j) = d * d;
  }
  // Shift by the nearest distance so lines that miss the grid still normalize.
  const Eigen::ArrayXd w = (-(d2 - d2.minCoeff()) / (2.0 * sigma * sigma)).exp();
  Heatmap out(grid.h, grid.w);
  Eigen::Map<Eigen::VectorXd>(out.data(), grid.cells()) = w / w.sum();
  return out;
}

}  // namespace fuselab
