#include "fuselab/heatmap.hpp"

#include <cmath>

#include "fuselab/error.hpp"

namespace fuselab {

Heatmap render_gaussian(const Pixel& center, const GridShape& grid, double sigma) {
  validate(grid);
  require(sigma > 0.0, ErrorKind::InvalidArgument, "sigma must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Heatmap out(grid.h, grid.w);
  for (int r = 0; r < grid.h; ++r) {
    const double dy = r + 0.5 - center.y();
    for (int c = 0; c < grid.w; ++c) {
      const double dx = c + 0.5 - center.x();
      out(r, c) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return out;
}

Heatmap softmax_temperature(const Heatmap& x, double t) {
  if (!(t > 0.0)) fail(ErrorKind::InvalidTemperature, "temperature must be positive");
  Heatmap e = ((x.array() - x.maxCoeff()) / t).exp().matrix();
  e /= e.sum();
  return e;
}

HeatmapStack softmax_temperature_stack(const HeatmapStack& x, double t) {
  if (!(t > 0.0)) fail(ErrorKind::InvalidTemperature, "temperature must be positive");
  HeatmapStack out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::ArrayXd e = ((x.col(j).array() - x.col(j).maxCoeff()) / t).exp();
    out.col(j) = (e / e.sum()).matrix();
  }
  return out;
}

Pixel argmax_subpixel(const Heatmap& x) {
  require(x.size() > 0, ErrorKind::ShapeError, "empty heatmap");
  Eigen::Index best = 0;
  const double* d = x.data();
  for (Eigen::Index k = 1; k < x.size(); ++k) {
    if (d[k] > d[best]) best = k;
  }
  const int r = static_cast<int>(best / x.cols());
  const int c = static_cast<int>(best % x.cols());
  Pixel p(c + 0.5, r + 0.5);
  if (c > 0 && c + 1 < x.cols()) {
    const double diff = x(r, c + 1) - x(r, c - 1);
    if (diff > 0.0) p.x() += 0.25;
    if (diff < 0.0) p.x() -= 0.25;
  }
  if (r > 0 && r + 1 < x.rows()) {
    const double diff = x(r + 1, c) - x(r - 1, c);
    if (diff > 0.0) p.y() += 0.25;
    if (diff < 0.0) p.y() -= 0.25;
  }
  return p;
}

double mse(std::span<const HeatmapStack> a, std::span<const HeatmapStack> b) {
  require(a.size() == b.size(), ErrorKind::ShapeError, "stack counts differ");
  double sum = 0.0;
  Eigen::Index count = 0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    require(a[v].rows() == b[v].rows() && a[v].cols() == b[v].cols(), ErrorKind::ShapeError,
            "stack shapes differ");
    sum += (a[v] - b[v]).squaredNorm();
    count += a[v].size();
  }
  require(count > 0, ErrorKind::ShapeError, "empty stacks");
  return sum / static_cast<double>(count);
}

double mse(const Heatmap& a, const Heatmap& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols() && a.size() > 0, ErrorKind::ShapeError,
          "heatmap shapes differ");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace fuselab
