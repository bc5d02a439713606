#include "fuselab/fd_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fuselab/error.hpp"

namespace fuselab {

FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& p,
                  const Eigen::VectorXd& analytic, double eps, Eigen::Index max_coords,
                  std::uint64_t seed) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "eps must be positive");
  require(p.size() == analytic.size(), ErrorKind::ShapeError, "gradient length differs from p");

  std::vector<Eigen::Index> coords(p.size());
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  if (p.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  FdReport report;
  Eigen::VectorXd x = p;
  for (Eigen::Index k : coords) {
    x(k) = p(k) + eps;
    const double up = f(x);
    x(k) = p(k) - eps;
    const double down = f(x);
    x(k) = p(k);
    const double fd = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic(k)), std::abs(fd), 1e-8});
    const double err = std::abs(analytic(k) - fd) / denom;
    if (err > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err >= report.max_rel_error) report.worst_index = k;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace fuselab
