#include "fuselab/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fuselab/error.hpp"

namespace fuselab {

RngState make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                    0x5eedu};
  return RngState(seq);
}

double WorldConfig::effective_focal() const {
  if (focal > 0.0) return focal;
  return 0.5 * grid.w * radius / (2.2 * volume_extent);
}

Rig sub_rig(const Rig& rig, const std::vector<int>& indices) {
  Rig out;
  out.id = rig.id;
  for (int i : indices) {
    require(i >= 0 && i < rig.size(), ErrorKind::InvalidArgument,
            "camera index " + std::to_string(i) + " out of range");
    out.id += (out.cameras.empty() ? ":" : ",") + std::to_string(i);
    out.cameras.push_back(rig.cameras[i]);
  }
  return out;
}

Rig make_dome_rig(int n_cams, double radius, std::uint64_t seed, double focal,
                  const GridShape& grid, double min_elevation_deg, double max_elevation_deg) {
  require(n_cams >= 2, ErrorKind::DegenerateRig, "a rig needs at least two cameras");
  require(radius > 0.0 && focal > 0.0, ErrorKind::InvalidArgument, "radius and focal must be positive");
  validate(grid);
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double min_separation = std::cos(8.0 * kDeg);

  RngState rng = make_stream(seed, 0xd0e);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> elevation(min_elevation_deg * kDeg, max_elevation_deg * kDeg);
  const Eigen::Vector2d principal(0.5 * grid.w, 0.5 * grid.h);

  Rig rig;
  rig.id = "dome-" + std::to_string(n_cams) + "-" + std::to_string(seed);
  std::vector<Eigen::Vector3d> dirs;
  int attempts = 0;
  while (static_cast<int>(dirs.size()) < n_cams) {
    require(++attempts < 100000, ErrorKind::DegenerateRig, "cannot place cameras on the dome");
    const double az = azimuth(rng);
    const double el = elevation(rng);
    const Eigen::Vector3d d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const bool crowded = std::any_of(dirs.begin(), dirs.end(),
                                     [&](const Eigen::Vector3d& o) { return o.dot(d) > min_separation; });
    if (crowded) continue;
    dirs.push_back(d);
    rig.cameras.push_back(look_at(radius * d, Point3::Zero(), focal, principal));
  }
  return rig;
}

Rig make_world_rig(const WorldConfig& cfg) {
  Rig rig = make_dome_rig(cfg.n_cams + cfg.n_test_cams, cfg.radius, cfg.seed, cfg.effective_focal(),
                          cfg.grid, cfg.min_elevation_deg, cfg.max_elevation_deg);
  return rig;
}

Scene sample_scene(const Rig& rig, const GridShape& grid, int n_joints, double occl_rate,
                   double volume_extent, RngState& rng) {
  require(occl_rate >= 0.0 && occl_rate < 1.0, ErrorKind::InvalidArgument,
          "occlusion rate must lie in [0, 1)");
  require(n_joints >= 1, ErrorKind::InvalidArgument, "need at least one joint");
  const int n_views = rig.size();
  std::uniform_real_distribution<double> coord(-volume_extent, volume_extent);
  std::bernoulli_distribution occluded(occl_rate);

  Scene scene;
  scene.joints.resize(n_joints);
  for (int j = 0; j < n_joints; ++j) {
    int tries = 0;
    for (;;) {
      if (++tries > 1000) fail(ErrorKind::SceneGenFailure, "joint never lands on-grid in two views");
      const Point3 p(coord(rng), coord(rng), coord(rng));
      int seen = 0;
      for (const Camera& cam : rig.cameras) {
        if (depth(cam, p) > kMinDepth && on_grid(grid, project(cam, p))) ++seen;
      }
      if (seen >= std::min(2, n_views)) {
        scene.joints[j] = p;
        break;
      }
    }
  }

  scene.occlusion.resize(n_views, n_joints);
  for (int j = 0; j < n_joints; ++j) {
    int tries = 0;
    for (;;) {
      if (++tries > 1000) fail(ErrorKind::SceneGenFailure, "joint occluded in every view");
      for (int v = 0; v < n_views; ++v) scene.occlusion(v, j) = occluded(rng);
      if (!scene.occlusion.col(j).all()) break;
    }
  }
  return scene;
}

namespace {

Pixel wrong_location(const Pixel& truth, const GridShape& grid, RngState& rng) {
  std::uniform_real_distribution<double> ux(0.5, grid.w - 0.5);
  std::uniform_real_distribution<double> uy(0.5, grid.h - 0.5);
  const double min_dist = 0.25 * std::min(grid.h, grid.w);
  Pixel p(ux(rng), uy(rng));
  for (int tries = 0; tries < 100 && (p - truth).norm() < min_dist; ++tries) p = Pixel(ux(rng), uy(rng));
  return p;
}

}  // namespace

MultiViewSample render_detections(const Scene& scene, const Rig& rig, const std::vector<int>& cameras,
                                  const GridShape& grid, double sigma, const NoiseSpec& noise,
                                  RngState& rng) {
  const int n_views = rig.size();
  const int n_joints = static_cast<int>(scene.joints.size());
  require(static_cast<int>(cameras.size()) == n_views, ErrorKind::ShapeError,
          "camera id list does not match the rig");
  require(scene.occlusion.rows() == n_views && scene.occlusion.cols() == n_joints,
          ErrorKind::ShapeError, "scene occlusion does not match rig/joints");

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  MultiViewSample s;
  s.grid = grid;
  s.cameras = cameras;
  s.joints = scene.joints;
  s.visibility = !scene.occlusion;
  s.views.assign(n_views, HeatmapStack::Zero(grid.cells(), n_joints));
  s.gt_heatmaps.assign(n_views, HeatmapStack::Zero(grid.cells(), n_joints));
  s.gt_pixels.assign(n_views, std::vector<Pixel>(n_joints));

  for (int v = 0; v < n_views; ++v) {
    for (int j = 0; j < n_joints; ++j) {
      const Pixel gt = project(rig.cameras[v], scene.joints[j]);
      s.gt_pixels[v][j] = gt;
      set_channel(s.gt_heatmaps[v], j, render_gaussian(gt, grid, sigma));

      Heatmap det;
      if (s.visibility(v, j)) {
        const Pixel jittered = gt + noise.jitter * Pixel(normal(rng), normal(rng));
        det = render_gaussian(jittered, grid, sigma);
        if (unit(rng) < noise.clutter_rate) {
          det += noise.clutter_amp * render_gaussian(wrong_location(gt, grid, rng), grid, sigma);
        }
      } else if (unit(rng) < noise.confusion) {
        det = noise.distractor_amp * render_gaussian(wrong_location(gt, grid, rng), grid, sigma);
      } else {
        const Pixel weak = gt + noise.occluded_jitter * Pixel(normal(rng), normal(rng));
        det = noise.occluded_amp * render_gaussian(weak, grid, sigma);
      }
      if (noise.floor > 0.0) {
        for (Eigen::Index k = 0; k < det.size(); ++k) det.data()[k] += noise.floor * unit(rng);
      }
      set_channel(s.views[v], j, det);
    }
  }
  return s;
}

std::vector<MultiViewSample> generate_samples(const Rig& rig, const std::vector<int>& cameras,
                                              int count, const WorldConfig& cfg,
                                              std::uint64_t seed, std::uint64_t stream) {
  const Rig views = sub_rig(rig, cameras);
  std::vector<MultiViewSample> out;
  out.reserve(std::max(count, 0));
  for (int s = 0; s < count; ++s) {
    RngState rng = make_stream(seed, stream, static_cast<std::uint64_t>(s));
    const Scene scene = sample_scene(views, cfg.grid, cfg.n_joints, cfg.occl_rate, cfg.volume_extent, rng);
    out.push_back(render_detections(scene, views, cameras, cfg.grid, cfg.heatmap_sigma, cfg.noise, rng));
  }
  return out;
}

std::vector<ViewPair> ordered_pairs(const std::vector<int>& cameras) {
  std::vector<ViewPair> pairs;
  for (int a : cameras) {
    for (int b : cameras) {
      if (a != b) pairs.push_back({a, b});
    }
  }
  return pairs;
}

std::vector<ViewPair> sample_task_pairs(int n_cams, int n_tasks, std::uint64_t seed,
                                        PairSampling mode) {
  require(n_cams >= 2, ErrorKind::DegenerateRig, "task sampling needs >= 2 cameras");
  require(n_tasks >= 1, ErrorKind::InvalidArgument, "n_tasks must be >= 1");
  std::vector<int> all(n_cams);
  for (int i = 0; i < n_cams; ++i) all[i] = i;
  const std::vector<ViewPair> pairs = ordered_pairs(all);

  RngState rng = make_stream(seed, 0x7a5c);
  std::vector<ViewPair> out;
  out.reserve(n_tasks);
  if (mode == PairSampling::Exhaustive) {
    std::vector<ViewPair> order = pairs;
    while (static_cast<int>(out.size()) < n_tasks) {
      std::shuffle(order.begin(), order.end(), rng);
      for (const ViewPair& p : order) {
        if (static_cast<int>(out.size()) == n_tasks) break;
        out.push_back(p);
      }
    }
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  while (static_cast<int>(out.size()) < n_tasks) {
    const ViewPair p = pairs[pick(rng)];
    if (!out.empty() && out.back() == p) continue;
    out.push_back(p);
  }
  return out;
}

Task make_task(const Rig& rig, const ViewPair& pair, int k, const WorldConfig& cfg,
               std::uint64_t seed, std::uint64_t task_index) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  Task task;
  task.pair = pair;
  std::vector<MultiViewSample> all =
      generate_samples(rig, {pair.target, pair.source}, 2 * k, cfg, seed, task_index + 1);
  task.train_split.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + k));
  task.test_split.assign(std::make_move_iterator(all.begin() + k), std::make_move_iterator(all.end()));
  return task;
}

std::vector<Task> sample_tasks(const Rig& rig, int n_tasks, int k, const WorldConfig& cfg,
                               std::uint64_t seed, PairSampling mode) {
  require(rig.size() >= 2, ErrorKind::DegenerateRig, "task sampling needs >= 2 cameras");
  const std::vector<ViewPair> pairs = sample_task_pairs(rig.size(), n_tasks, seed, mode);
  std::vector<Task> tasks;
  tasks.reserve(pairs.size());
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    tasks.push_back(make_task(rig, pairs[t], k, cfg, seed, t));
  }
  return tasks;
}

}  // namespace fuselab
