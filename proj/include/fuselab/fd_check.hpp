#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace fuselab {

struct FdReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::Index checked = 0;
};

/// Central differences of `f` at `p` against `analytic`, per coordinate, or
/// over a seeded random subset of `max_coords` coordinates for larger
/// vectors. Relative error uses max(|analytic|, |fd|, 1e-8) as denominator.
FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& p,
                  const Eigen::VectorXd& analytic, double eps, Eigen::Index max_coords = 10000,
                  std::uint64_t seed = 0);

}  // namespace fuselab
