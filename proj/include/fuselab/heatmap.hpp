#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "fuselab/core.hpp"

namespace fuselab {

/// J joint channels of one view, one flattened grid per column (|Z| x J).
using HeatmapStack = Eigen::MatrixXd;

inline Heatmap channel(const HeatmapStack& stack, int joint, const GridShape& grid) {
  return Eigen::Map<const Heatmap>(stack.col(joint).data(), grid.h, grid.w);
}

inline void set_channel(HeatmapStack& stack, int joint, const Heatmap& map) {
  stack.col(joint) = Eigen::Map<const Eigen::VectorXd>(map.data(), map.size());
}

/// Detector output and supervision for one multi-camera frame.
struct MultiViewSample {
  GridShape grid;
  std::vector<int> cameras;                  // rig index of each view
  std::vector<HeatmapStack> views;           // detections before fusion
  std::vector<HeatmapStack> gt_heatmaps;
  std::vector<std::vector<Pixel>> gt_pixels; // [view][joint]
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> visibility;  // views x joints
  std::vector<Point3> joints;

  int num_views() const { return static_cast<int>(views.size()); }
  int num_joints() const { return views.empty() ? 0 : static_cast<int>(views.front().cols()); }
};

/// exp(-|c_j - center|^2 / (2 sigma^2)) at every cell center c_j.
Heatmap render_gaussian(const Pixel& center, const GridShape& grid, double sigma);

/// Temperature softmax over all cells, max-subtracted. Throws
/// InvalidTemperature for t <= 0.
Heatmap softmax_temperature(const Heatmap& x, double t);

/// Column-wise temperature softmax of a stack.
HeatmapStack softmax_temperature_stack(const HeatmapStack& x, double t);

/// Integer argmax (ties to the smaller row-major index) refined by a quarter
/// cell towards the larger neighbor on each axis.
Pixel argmax_subpixel(const Heatmap& x);

/// Mean squared difference over every cell of every channel.
double mse(std::span<const HeatmapStack> a, std::span<const HeatmapStack> b);
double mse(const Heatmap& a, const Heatmap& b);

}  // namespace fuselab
