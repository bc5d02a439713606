#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fuselab/geometry.hpp"
#include "fuselab/heatmap.hpp"

namespace fuselab {

/// Random stream. Streams are keyed, never shared: see `make_stream`.
using RngState = std::mt19937_64;

/// Independent stream for (seed, a, b); used as (seed, task, sample).
RngState make_stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

/// Simulated detector errors. Defaults put No-Fusion near 100% JDR on
/// visible joints and about 45% on occluded ones.
struct NoiseSpec {
  double jitter = 0.5;           // visible peak displacement std, cells
  double confusion = 0.25;       // P(distractor | occluded)
  double distractor_amp = 0.6;   // amplitude of a distractor on an occluded joint
  double occluded_amp = 0.5;     // residual true response of an occluded, unconfused joint
  double occluded_jitter = 1.5;  // its displacement std, cells
  double clutter_rate = 0.0;     // P(extra low blob | visible)
  double clutter_amp = 0.3;
  double floor = 0.0;            // uniform background noise in [0, floor)

  static NoiseSpec none() {
    return NoiseSpec{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  }
};

struct WorldConfig {
  int n_cams = 20;       // meta-training cameras
  int n_test_cams = 6;   // held-out cameras, appended after the training ones
  double radius = 3.0;
  GridShape grid{16, 16};
  int n_joints = 6;
  double occl_rate = 0.3;
  NoiseSpec noise;
  std::uint64_t seed = 1;
  double volume_extent = 0.6;  // joints uniform in [-e, e]^3
  double focal = 0.0;          // grid units; <= 0 selects a default that frames the volume
  double heatmap_sigma = 1.5;
  double min_elevation_deg = 5.0;
  double max_elevation_deg = 50.0;

  double effective_focal() const;
};

struct Rig {
  std::string id;
  std::vector<Camera> cameras;

  int size() const { return static_cast<int>(cameras.size()); }
};

/// Rig restricted to `indices`; keeps the parent indexing out of the result.
Rig sub_rig(const Rig& rig, const std::vector<int>& indices);

/// Cameras on a hemisphere of `radius`, all looking at the origin. Elevation
/// is drawn in [min, max] degrees and viewpoints closer than 8 degrees are
/// rejected.
Rig make_dome_rig(int n_cams, double radius, std::uint64_t seed, double focal,
                  const GridShape& grid, double min_elevation_deg = 5.0,
                  double max_elevation_deg = 50.0);

/// Dome rig holding cfg.n_cams training cameras followed by cfg.n_test_cams
/// held-out ones.
Rig make_world_rig(const WorldConfig& cfg);

struct Scene {
  std::vector<Point3> joints;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> occlusion;  // views x joints
};

Scene sample_scene(const Rig& rig, const GridShape& grid, int n_joints, double occl_rate,
                   double volume_extent, RngState& rng);

/// `cameras` maps the rig's views to the ids stored in the sample.
MultiViewSample render_detections(const Scene& scene, const Rig& rig, const std::vector<int>& cameras,
                                  const GridShape& grid, double sigma, const NoiseSpec& noise,
                                  RngState& rng);

/// `count` samples of the camera subset `cameras`; sample s draws from
/// make_stream(seed, stream, s).
std::vector<MultiViewSample> generate_samples(const Rig& rig, const std::vector<int>& cameras,
                                              int count, const WorldConfig& cfg,
                                              std::uint64_t seed, std::uint64_t stream);

struct ViewPair {
  int target = 0;
  int source = 0;

  auto operator<=>(const ViewPair&) const = default;
};

std::vector<ViewPair> ordered_pairs(const std::vector<int>& cameras);

struct Task {
  ViewPair pair;  // cameras (target, source); both directions are trained
  std::vector<MultiViewSample> train_split;
  std::vector<MultiViewSample> test_split;
};

enum class PairSampling { Random, Exhaustive };

/// Random: uniform ordered pair, never the same as the previous task.
/// Exhaustive: a seeded permutation of all ordered pairs, cycled.
std::vector<Task> sample_tasks(const Rig& rig, int n_tasks, int k, const WorldConfig& cfg,
                               std::uint64_t seed, PairSampling mode = PairSampling::Random);

/// Pair sequence of `sample_tasks` without rendering any samples.
std::vector<ViewPair> sample_task_pairs(int n_cams, int n_tasks, std::uint64_t seed,
                                        PairSampling mode);

/// Single task for `pair` using the same streams as `sample_tasks`.
Task make_task(const Rig& rig, const ViewPair& pair, int k, const WorldConfig& cfg,
               std::uint64_t seed, std::uint64_t task_index);

}  // namespace fuselab
