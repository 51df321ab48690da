#include <doctest.h>

#include <cmath>
#include <random>

#include <gsdot/error.hpp>
#include <gsdot/metrics.hpp>
#include <gsdot/phantoms.hpp>
#include <gsdot/splats.hpp>

#include "support.hpp"

using namespace gsdot;

namespace {

// Straightforward per-window SSIM with two-pass statistics.
double ssim_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int w, double L) {
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + w <= x.rows(); ++r)
    for (int c = 0; c + w <= x.cols(); ++c) {
      const Eigen::MatrixXd a = x.block(r, c, w, w), b = y.block(r, c, w, w);
      const double ma = a.mean(), mb = b.mean();
      const double va = (a.array() - ma).square().mean(), vb = (b.array() - mb).square().mean();
      const double cov = ((a.array() - ma) * (b.array() - mb)).mean();
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

Eigen::MatrixXd random_image(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> u(0.0, scale);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("phantom defaults") {
  const Grid g = build_grid(Domain{}, 0.1);
  const PhantomSpec one = default_phantom(PhantomCase::OneInclusion);
  REQUIRE(one.include.size() == 1);
  CHECK(one.include[0].center == Point2(1.0, 0.5));
  CHECK(one.include[0].radius == 0.6);
  CHECK(one.contrast == 0.02);
  const Eigen::VectorXd f = make_phantom(one, g, Domain{});
  CHECK(f[g.raster_to_active[g.nearest_pixel(Point2(1.0, 0.5))]] == 0.02);

  int brute = 0;
  for (int k = 0; k < g.n_active(); ++k)
    if ((g.active_centers.col(k) - Point2(1.0, 0.5)).norm() <= 0.6) ++brute;
  const int inside = int((f.array() > 0).count());
  CHECK(inside == brute);
  CHECK(std::abs(inside - 113) <= 4);

  const PhantomSpec donut = default_phantom(PhantomCase::Donut);
  const Eigen::VectorXd fd = make_phantom(donut, g, Domain{});
  CHECK(fd[g.raster_to_active[g.nearest_pixel(Point2(0.8, -0.6))]] == 0.0);
  CHECK(fd[g.raster_to_active[g.nearest_pixel(Point2(0.8 + 0.8, -0.6))]] == 0.02);

  const Eigen::VectorXd fc = make_phantom(default_phantom(PhantomCase::Crescent), g, Domain{});
  CHECK(fc[g.raster_to_active[g.nearest_pixel(Point2(-1.65, 0.0))]] == 0.02);  // thick side of the crescent
  CHECK(fc[g.raster_to_active[g.nearest_pixel(Point2(-0.4, 0.0))]] == 0.0);    // bite

  const Eigen::VectorXd ft = make_phantom(default_phantom(PhantomCase::ThreeCircles), g, Domain{});
  CHECK(ft[g.raster_to_active[g.nearest_pixel(Point2(0.0, 1.5))]] == 0.02);
  CHECK(ft[g.raster_to_active[g.nearest_pixel(Point2(0.0, 0.0))]] == 0.0);

  CHECK(default_splat_count(PhantomCase::OneInclusion) == 1);
  CHECK(default_splat_count(PhantomCase::ThreeCircles) == 3);
}

TEST_CASE("phantoms are binary and inside the domain") {
  const Grid g = build_grid(Domain{}, 0.1);
  for (PhantomCase c : kAllPhantomCases) {
    CAPTURE(std::string(to_string(c)));
    const Eigen::VectorXd f = make_phantom(default_phantom(c), g, Domain{});
    CHECK(((f.array() == 0.0) || (f.array() == 0.02)).all());
    CHECK(f.sum() > 0.0);
    CHECK(parse_phantom_case(to_string(c)) == c);
  }
  CHECK_FALSE(parse_phantom_case("square").has_value());

  PhantomSpec bad = default_phantom(PhantomCase::OneInclusion);
  bad.include[0].center = Point2(2.7, 0.0);
  CHECK_THROWS_AS(make_phantom(bad, g, Domain{}), Error);
  bad = default_phantom(PhantomCase::OneInclusion);
  bad.contrast = 0.0;
  CHECK_THROWS_AS(make_phantom(bad, g, Domain{}), Error);
}

TEST_CASE("rmse") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  Eigen::VectorXd a(500), b(500), c(500);
  for (int i = 0; i < 500; ++i) a[i] = u(rng), b[i] = u(rng), c[i] = u(rng);
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a.array() + 0.003, a) == doctest::Approx(0.003).epsilon(1e-12));
  double s = 0.0;
  for (int i = 0; i < 500; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(std::abs(rmse(a, b) - std::sqrt(s / 500)) < 1e-12);
  CHECK(rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-15);
  CHECK_THROWS_AS(rmse(a, b.head(10)), Error);
}

TEST_CASE("ssim") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_image(rng, 16, 1.0);
  CHECK(std::abs(ssim(x, x) - 1.0) < 1e-12);

  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd a = random_image(rng, 12, 1.0), b = random_image(rng, 12, 1.0) - random_image(rng, 12, 1.0);
    const double v = ssim(a, b);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  const Eigen::MatrixXd a = random_image(rng, 16, 0.02), b = random_image(rng, 16, 0.02);
  const double L = b.maxCoeff() - b.minCoeff();
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b, 7, L)) < 1e-10);

  SsimOptions fixed;
  fixed.data_range = 0.05;
  CHECK(std::abs(ssim(a, b, fixed) - ssim(b, a, fixed)) < 1e-12);
  CHECK(std::abs(ssim(a, b, fixed) - ssim_oracle(a, b, 7, 0.05)) < 1e-10);

  CHECK_THROWS_AS(ssim(Eigen::MatrixXd::Zero(5, 5), Eigen::MatrixXd::Zero(5, 5)), Error);
  CHECK_THROWS_AS(ssim(a, b.topRows(10)), Error);
}

TEST_CASE("center of mass") {
  const Grid g = build_grid(Domain{}, 0.1);
  const Point2 c = g.pixel_center(g.nearest_pixel(Point2(0.42, -0.73)));
  Eigen::VectorXd blob(g.n_active()), shifted = Eigen::VectorXd::Zero(g.n_active());
  for (int k = 0; k < g.n_active(); ++k) blob[k] = std::exp(-(g.active_centers.col(k) - c).squaredNorm() / 0.18);
  CHECK((center_of_mass(g, blob) - c).norm() < 1e-10);

  // shift by one pixel in +x
  for (int k = 0; k < g.n_active(); ++k) {
    const int dst = g.raster_to_active[g.active_indices[k] + 1];
    if (dst >= 0) shifted[dst] = blob[k];
  }
  const Point2 d = center_of_mass(g, shifted) - center_of_mass(g, blob);
  CHECK(d.x() == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(std::abs(d.y()) < 1e-9);
  CHECK(com_error(shifted, blob, g) == doctest::Approx(0.1).epsilon(1e-6));

  Eigen::VectorXd pts = Eigen::VectorXd::Zero(g.n_active());
  pts[g.raster_to_active[g.nearest_pixel(Point2(1.05, 0.05))]] = 1.0;
  pts[g.raster_to_active[g.nearest_pixel(Point2(-1.05, 0.05))]] = 1.0;
  const Point2 m = center_of_mass(g, pts);
  CHECK(std::abs(m.x()) < 1e-12);

  try {
    center_of_mass(g, Eigen::VectorXd::Zero(g.n_active()));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UndefinedCenterOfMass);
  }
}

TEST_CASE("line profiles") {
  const Grid g = build_grid(Domain{}, 0.1);
  const Eigen::MatrixXd flat = to_image(g, Eigen::VectorXd::Constant(g.n_active(), 0.3), 0.3);
  const Eigen::VectorXd px = line_profile(g, flat, Point2(0.2, 0.4), Axis::X);
  CHECK(px.size() == g.width);
  CHECK((px.array() == 0.3).all());
  CHECK(line_profile(g, flat, Point2(0.2, 0.4), Axis::Y).size() == g.height);

  const Point2 c = g.pixel_center(g.nearest_pixel(Point2(-0.75, 1.05)));
  const SplatParams p(encode_params(std::vector<Splatd>{{0.02, c, 0.3, 0.5, 0.4}}));
  const Eigen::MatrixXd img = to_image(g, rasterize(p, g).field);
  const int pix = g.nearest_pixel(c);
  Eigen::Index ix, iy;
  line_profile(g, img, c, Axis::X).maxCoeff(&ix);
  line_profile(g, img, c, Axis::Y).maxCoeff(&iy);
  CHECK(ix == pix % g.width);
  CHECK(iy == pix / g.width);

  CHECK_THROWS_AS(line_profile(g, flat, Point2(4.0, 0.0), Axis::X), Error);
}

TEST_CASE("metric report on absolute maps") {
  const Grid g = build_grid(Domain{}, 0.1);
  const Eigen::VectorXd gt = make_phantom(default_phantom(PhantomCase::OneInclusion), g, Domain{});
  const MetricsReport same = evaluate_metrics(g, gt, gt, 0.01);
  CHECK(same.rmse == 0.0);
  CHECK(std::abs(same.ssim - 1.0) < 1e-12);
  CHECK(same.com_error == 0.0);

  Eigen::VectorXd recon = 0.8 * gt;
  recon[0] += 1e-3;
  const MetricsReport r = evaluate_metrics(g, recon, gt, 0.01);
  CHECK(r.rmse == doctest::Approx(rmse(recon, gt)));
  CHECK(r.com_error == doctest::Approx(com_error(recon, gt, g)));
  const Eigen::MatrixXd ra = to_image(g, recon.array() + 0.01), ga = to_image(g, gt.array() + 0.01);
  CHECK(std::abs(r.ssim - ssim_oracle(ra, ga, 7, ga.maxCoeff() - ga.minCoeff())) < 1e-10);
  CHECK(r.ssim < 1.0);
}
