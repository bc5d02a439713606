#include "fuselab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fuselab/error.hpp"
#include "fuselab/parallel.hpp"

namespace fuselab {

double jdr(std::span<const Pixel> pred, std::span<const Pixel> gt, double threshold) {
  require(pred.size() == gt.size(), ErrorKind::ShapeError, "prediction and ground-truth counts differ");
  require(threshold > 0.0, ErrorKind::InvalidArgument, "threshold must be positive");
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += (pred[i] - gt[i]).norm() <= threshold ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
}

double mpjpe(std::span<const Point3> pred, std::span<const Point3> gt) {
  require(pred.size() == gt.size(), ErrorKind::ShapeError, "prediction and ground-truth counts differ");
  if (pred.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - gt[i]).norm();
  return total / static_cast<double>(pred.size());
}

MassScore epipolar_mass_score(const Eigen::MatrixXd& weights, const GridShape& grid, const FundamentalMatrix& f,
                              double band, int stride, std::span<const int> cells) {
  require(band > 0.0, ErrorKind::InvalidArgument, "band must be positive");
  require(stride >= 1, ErrorKind::InvalidArgument, "stride must be >= 1");
  require(weights.rows() == grid.cells() && weights.cols() == grid.cells(), ErrorKind::ShapeError,
          "weights must be |Z| x |Z|");
  std::vector<int> chosen(cells.begin(), cells.end());
  if (chosen.empty()) {
    for (int i = 0; i < grid.cells(); i += stride) chosen.push_back(i);
  }

  MassScore out;
  double total = 0.0;
  for (int i : chosen) {
    require(i >= 0 && i < grid.cells(), ErrorKind::InvalidArgument, "cell index out of range");
    Line2 line;
    try {
      line = epipolar_line(f, cell_center(grid, i));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EpipoleDegenerate) throw;
      ++out.skipped_degenerate;
      continue;
    }
    double mass = 0.0, in_band = 0.0;
    for (int j = 0; j < grid.cells(); ++j) {
      const double w = std::abs(weights(i, j));
      mass += w;
      if (point_line_distance(line, cell_center(grid, j)) <= band) in_band += w;
    }
    if (mass < 1e-8) {
      ++out.skipped_low_mass;
      continue;
    }
    total += in_band / mass;
    ++out.scored;
  }
  out.undefined = out.scored == 0;
  out.score = out.undefined ? 0.0 : total / out.scored;
  return out;
}

MassScore epipolar_mass_score(const FactorizedFusionParams& params, const ViewPair& pair,
                              const FundamentalMatrix& f, double band, int stride, std::span<const int> cells) {
  return epipolar_mass_score(materialize(FusionParams{params}, pair), params.grid, f, band, stride, cells);
}

std::vector<int> supported_cells(std::span<const MultiViewSample> samples, int view) {
  std::set<int> cells;
  for (const MultiViewSample& s : samples) {
    require(view >= 0 && view < static_cast<int>(s.gt_pixels.size()), ErrorKind::InvalidArgument,
            "view index out of range");
    for (const Pixel& p : s.gt_pixels[view]) {
      if (!on_grid(s.grid, p)) continue;
      cells.insert(static_cast<int>(std::floor(p.y())) * s.grid.w + static_cast<int>(std::floor(p.x())));
    }
  }
  return {cells.begin(), cells.end()};
}

ModelScore score_model(const std::optional<FusionParams>& params, const std::vector<MultiViewSample>& test,
                       const std::vector<Camera>& cameras, const EvalConfig& cfg) {
  require(!test.empty(), ErrorKind::InvalidArgument, "empty test set");
  require(cfg.jdr_threshold > 0.0, ErrorKind::InvalidArgument, "jdr threshold must be positive");
  const int n_joints = test.front().num_joints();

  struct PerSample {
    std::vector<int> hit_visible, n_visible, hit_occluded, n_occluded;  // per joint
    std::vector<Point3> pred, gt;
    double sq = 0.0;
    double count = 0.0;
  };
  std::vector<PerSample> per(test.size());

  parallel_for(static_cast<int>(test.size()), [&](int idx) {
    const MultiViewSample& raw = test[idx];
    const MultiViewSample fused = params ? fuse_multiview(raw, *params) : raw;
    const FuseConfig loss_view{cfg.loss.loss_on_softmax, cfg.loss.temperature};
    PerSample& r = per[idx];
    r.hit_visible.assign(n_joints, 0);
    r.n_visible.assign(n_joints, 0);
    r.hit_occluded.assign(n_joints, 0);
    r.n_occluded.assign(n_joints, 0);
    std::vector<Camera> cams;
    for (int c : raw.cameras) {
      require(c >= 0 && c < static_cast<int>(cameras.size()), ErrorKind::InvalidArgument,
              "sample camera outside the rig");
      cams.push_back(cameras[c]);
    }
    for (int v = 0; v < fused.num_views(); ++v) {
      const HeatmapStack compared = loss_view.apply_softmax
                                        ? softmax_temperature_stack(fused.views[v], loss_view.temperature)
                                        : fused.views[v];
      r.sq += (compared - raw.gt_heatmaps[v]).squaredNorm();
      r.count += static_cast<double>(fused.views[v].size());
    }
    for (int j = 0; j < n_joints; ++j) {
      std::vector<Pixel> decoded;
      for (int v = 0; v < fused.num_views(); ++v) {
        const Pixel p = argmax_subpixel(channel(fused.views[v], j, fused.grid));
        decoded.push_back(p);
        const Pixel& gt = raw.gt_pixels[v][j];
        if (!on_grid(raw.grid, gt)) continue;
        const bool hit = (p - gt).norm() <= cfg.jdr_threshold;
        if (raw.visibility(v, j)) {
          ++r.n_visible[j];
          r.hit_visible[j] += hit ? 1 : 0;
        } else {
          ++r.n_occluded[j];
          r.hit_occluded[j] += hit ? 1 : 0;
        }
      }
      r.pred.push_back(triangulate_dlt(cams, decoded));
      r.gt.push_back(raw.joints[j]);
    }
  });

  ModelScore out;
  std::vector<std::int64_t> hits(n_joints, 0), totals(n_joints, 0);
  std::int64_t hv = 0, ho = 0;
  std::vector<Point3> pred, gt;
  double sq = 0.0, count = 0.0;
  for (const PerSample& r : per) {
    for (int j = 0; j < n_joints; ++j) {
      hv += r.hit_visible[j];
      ho += r.hit_occluded[j];
      out.jdr.n_visible += r.n_visible[j];
      out.jdr.n_occluded += r.n_occluded[j];
      hits[j] += r.hit_visible[j] + r.hit_occluded[j];
      totals[j] += r.n_visible[j] + r.n_occluded[j];
    }
    pred.insert(pred.end(), r.pred.begin(), r.pred.end());
    gt.insert(gt.end(), r.gt.begin(), r.gt.end());
    sq += r.sq;
    count += r.count;
  }
  auto pct = [](std::int64_t h, std::int64_t n) { return n == 0 ? 0.0 : 100.0 * static_cast<double>(h) / n; };
  out.jdr.visible = pct(hv, out.jdr.n_visible);
  out.jdr.occluded = pct(ho, out.jdr.n_occluded);
  out.jdr.all = pct(hv + ho, out.jdr.n_visible + out.jdr.n_occluded);
  for (int j = 0; j < n_joints; ++j) out.jdr.per_joint.push_back(pct(hits[j], totals[j]));
  out.mpjpe = mpjpe(pred, gt);
  out.test_loss = sq / count;
  return out;
}

}  // namespace fuselab
