#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fuselab/error.hpp"
#include "fuselab/heatmap.hpp"

using namespace fuselab;

namespace {

const GridShape kGrid{16, 16};

Heatmap random_map(std::mt19937_64& rng, const GridShape& g, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Heatmap m(g.h, g.w);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

Eigen::Index flat_argmax(const Heatmap& m) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < m.size(); ++k) {
    if (m.data()[k] > m.data()[best]) best = k;
  }
  return best;
}

}  // namespace

TEST_CASE("render_gaussian: peak, symmetry and width") {
  const Heatmap on = render_gaussian({5.5, 9.5}, kGrid, 1.5);
  CHECK(on(9, 5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(on.maxCoeff() == on(9, 5));

  const Heatmap between = render_gaussian({6.0, 9.5}, kGrid, 1.5);
  CHECK(std::abs(between(9, 5) - between(9, 6)) < 1e-12);

  // a cell exactly sigma = 2 cells away
  const Heatmap wide = render_gaussian({5.5, 9.5}, kGrid, 2.0);
  CHECK(std::abs(wide(9, 7) / wide(9, 5) - std::exp(-0.5)) < 1e-9);

  const Heatmap off = render_gaussian({-30.0, 8.0}, kGrid, 1.5);
  CHECK(off.maxCoeff() < 1e-50);
}

TEST_CASE("softmax_temperature: closed forms") {
  Heatmap two(1, 2);
  two << 1.0, 0.0;
  // 1 x 2 is not a valid grid for fusion but softmax is shape-agnostic
  const Heatmap s = softmax_temperature(two, 1.0);
  CHECK(s(0, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(s(0, 1) == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)).epsilon(1e-14));

  const Heatmap flat = Heatmap::Constant(kGrid.h, kGrid.w, 0.37);
  const Heatmap u = softmax_temperature(flat, 0.2);
  CHECK((u.array() - 1.0 / kGrid.cells()).abs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(softmax_temperature(flat, 0.0), Error);
  try {
    softmax_temperature(flat, -1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidTemperature);
  }
}

TEST_CASE("softmax_temperature: properties over random maps") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> temps(0.05, 3.0);
  for (int t = 0; t < 200; ++t) {
    const Heatmap x = random_map(rng, kGrid, 2.0);
    const double temp = t == 0 ? 0.2 : temps(rng);
    const Heatmap s = softmax_temperature(x, temp);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(std::abs(s.sum() - 1.0) < 1e-9);
    CHECK(flat_argmax(s) == flat_argmax(x));
    const Heatmap shifted = softmax_temperature((x.array() + 41.5).matrix(), temp);
    CHECK((shifted - s).cwiseAbs().maxCoeff() < 1e-9);
    const Pixel p = argmax_subpixel(s);
    const Eigen::Index k = flat_argmax(x);
    CHECK(static_cast<Eigen::Index>(p.y()) == k / kGrid.w);
    CHECK(static_cast<Eigen::Index>(p.x()) == k % kGrid.w);
  }
}

TEST_CASE("argmax_subpixel: decoding") {
  Heatmap single = Heatmap::Zero(kGrid.h, kGrid.w);
  single(4, 11) = 0.3;
  CHECK((argmax_subpixel(single) - Pixel(11.5, 4.5)).norm() < 1e-15);

  const Heatmap centered = render_gaussian({7.5, 3.5}, kGrid, 1.5);
  CHECK((argmax_subpixel(centered) - Pixel(7.5, 3.5)).norm() < 1e-9);

  const Heatmap shifted = render_gaussian({7.8, 3.5}, kGrid, 1.5);
  CHECK(std::abs(argmax_subpixel(shifted).x() - 7.8) <= 0.25);

  // ties resolve to the smaller row-major index
  Heatmap tie = Heatmap::Zero(kGrid.h, kGrid.w);
  tie(2, 9) = 1.0;
  tie(5, 1) = 1.0;
  CHECK((argmax_subpixel(tie) - Pixel(9.5, 2.5)).norm() < 1e-15);
}

TEST_CASE("argmax_subpixel: decoder bias bounded by a quarter cell") {
  // exhaustive scan of sub-cell offsets on both axes
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    for (int k = 0; k <= 20; ++k) {
      const double dx = -0.5 + i * 0.01;
      const double dy = -0.5 + k * 0.05;
      const Pixel truth(8.5 + dx, 6.5 + dy);
      const Pixel p = argmax_subpixel(render_gaussian(truth, kGrid, 1.5));
      worst = std::max({worst, std::abs(p.x() - truth.x()), std::abs(p.y() - truth.y())});
    }
  }
  CHECK(worst <= 0.25 + 1e-12);
}

TEST_CASE("mse: closed forms and loop oracle") {
  std::mt19937_64 rng(5);
  std::vector<HeatmapStack> a{HeatmapStack::Random(256, 3), HeatmapStack::Random(256, 3)};
  std::vector<HeatmapStack> b = a;
  CHECK(mse(a, b) == 0.0);
  for (auto& m : b) m.array() += 0.7;
  CHECK(std::abs(mse(a, b) - 0.49) < 1e-12);

  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& m : b) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  }
  double sum = 0.0;
  int count = 0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    for (Eigen::Index r = 0; r < a[v].rows(); ++r) {
      for (Eigen::Index c = 0; c < a[v].cols(); ++c) {
        const double d = a[v](r, c) - b[v](r, c);
        sum += d * d;
        ++count;
      }
    }
  }
  CHECK(std::abs(mse(a, b) - sum / count) < 1e-12);

  std::vector<HeatmapStack> wrong{HeatmapStack::Zero(256, 2), HeatmapStack::Zero(256, 3)};
  try {
    mse(a, wrong);
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeError);
  }
}
