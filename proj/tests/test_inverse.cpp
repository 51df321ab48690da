#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include <gsdot/error.hpp>
#include <gsdot/inverse.hpp>

#include "support.hpp"

using namespace gsdot;

namespace {

const test::SmallProblem& problem() {
  static const test::SmallProblem sp;
  return sp;
}

// Full imaging geometry; only for checks whose thresholds refer to it.
const test::SmallProblem& full_problem() {
  static const test::SmallProblem sp(0.1, 10, 6.0, 0.02);
  return sp;
}

TpsfSet measured_from(const SplatParams& p, const test::SmallProblem& sp) {
  return born_forward(sp.J, rasterize(p, sp.grid).field, sp.baseline);
}

SplatParams splats_at(std::vector<Splatd> s) { return SplatParams(encode_params(s)); }

SplatParams random_params(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> amp(0.005, 0.04), pos(-1.8, 1.8), sc(0.2, 0.7), ang(-1.5, 1.5);
  std::vector<Splatd> s;
  for (int i = 0; i < k; ++i) s.push_back({amp(rng), Eigen::Vector2d(pos(rng), pos(rng)), sc(rng), sc(rng), ang(rng)});
  return splats_at(s);
}

HyperParams test_hyper(int k) {
  HyperParams h;
  h.n_splats = k;
  h.lambda_r = 1e-4;  // large enough that every term matters in gradient checks
  h.lambda_p = 1e-3;
  return h;
}

}  // namespace

TEST_CASE("hyperparameter validation") {
  HyperParams h;
  CHECK_NOTHROW(h.validate());
  h.n_splats = 0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = HyperParams{};
  h.lambda_p = -1;
  CHECK_THROWS_AS(h.validate(), Error);
  h = HyperParams{};
  h.r_p = -0.1;
  CHECK_THROWS_AS(h.validate(), Error);

  const Eigen::VectorXd lr = learning_rate_vector(HyperParams{}, 2);
  CHECK(lr.size() == 12);
  CHECK(lr[kLogAmplitude] == HyperParams{}.lr.log_amplitude);
  CHECK(lr[6 + kCenterY] == HyperParams{}.lr.center);
  CHECK(lr[6 + kLogScaleX] == HyperParams{}.lr.log_scale);
  CHECK(lr[kAngle] == HyperParams{}.lr.angle);
}

TEST_CASE("backprojection") {
  const auto& sp = full_problem();
  TpsfSet zero = sp.baseline;
  zero.values.setZero();
  const double eps = 1e-12 * max_column_energy(sp.J);
  CHECK(backproject(sp.J, zero, eps).cwiseAbs().maxCoeff() == 0.0);

  const TpsfSet meas = measured_from(splats_at({{0.02, Eigen::Vector2d(1.0, 0.5), 0.4, 0.4, 0.0}}), sp);
  TpsfSet resid = meas;
  resid.values -= sp.baseline.values;
  // A stabilizer of a few percent of the peak column energy keeps the
  // per-pixel ratio from favouring the poorly sensed interior.
  const Eigen::VectorXd img = backproject(sp.J, resid, 1e-2 * max_column_energy(sp.J));
  Eigen::Index best;
  img.maxCoeff(&best);
  CHECK((sp.grid.active_centers.col(best) - Eigen::Vector2d(1.0, 0.5)).norm() <= 0.3);

  const Eigen::VectorXd flat = backproject(sp.J, resid, 1e6 * max_column_energy(sp.J));
  CHECK(flat.cwiseAbs().maxCoeff() < 1e-6 * img.cwiseAbs().maxCoeff());

  TpsfSet wrong(1, 1, 3);
  CHECK_THROWS_AS(backproject(sp.J, wrong, eps), Error);
}

TEST_CASE("peak finding") {
  const Grid g = build_grid(Domain{}, 0.1);
  auto blob = [&](const Point2& c, double r) {
    Eigen::VectorXd f(g.n_active());
    for (int k = 0; k < g.n_active(); ++k) f[k] = std::exp(-(g.active_centers.col(k) - c).squaredNorm() / (2 * r * r));
    return f;
  };
  // argmax of a blob centred between pixels is one of the nearest centres
  const Point2 c1(0.62, -0.41);
  const PeakSeeds one = find_peaks(blob(c1, 0.5), g, 1, 0.6);
  CHECK((one.centers[0] - c1).norm() <= 0.5 * std::sqrt(2.0) * 0.1 + 1e-12);
  CHECK_FALSE(one.flagged[0]);

  const Point2 a(-1.0, 0.3), b(1.0, 0.3);
  const PeakSeeds two = find_peaks(blob(a, 0.5) + blob(b, 0.5), g, 2, 0.6);
  REQUIRE(two.centers.size() == 2);
  const bool order = (two.centers[0] - a).norm() < (two.centers[0] - b).norm();
  CHECK((two.centers[order ? 0 : 1] - a).norm() <= 0.1);
  CHECK((two.centers[order ? 1 : 0] - b).norm() <= 0.1);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::VectorXd noise(g.n_active());
  for (int k = 0; k < g.n_active(); ++k) noise[k] = u(rng);
  const PeakSeeds many = find_peaks(noise, g, 12, 0.6);
  for (std::size_t i = 0; i < many.centers.size(); ++i)
    for (std::size_t j = i + 1; j < many.centers.size(); ++j) CHECK((many.centers[i] - many.centers[j]).norm() >= 0.6);

  // ties go to the lowest index
  const PeakSeeds flat = find_peaks(Eigen::VectorXd::Zero(g.n_active()), g, 1, 0.6);
  CHECK(flat.centers[0] == Point2(g.active_centers.col(0)));
  CHECK(flat.flagged[0]);

  // more peaks than the suppression discs allow: still K seeds, extras flagged
  const Grid coarse = build_grid(Domain{}, 1.0);
  const PeakSeeds over = find_peaks(Eigen::VectorXd::Ones(coarse.n_active()), coarse, coarse.n_active() + 3, 5.0);
  CHECK(int(over.centers.size()) == coarse.n_active() + 3);
  CHECK_FALSE(over.flagged[0]);
  CHECK(over.flagged.back());
}

TEST_CASE("initial splats") {
  const Domain dom;
  const std::vector<Point2> c{Point2::Zero()};
  const SplatParams p = init_splats(c, 0.005, 0.4, dom, 0.1);
  Eigen::VectorXd expected(6);
  expected << std::log(0.005), 0, 0, std::log(0.4), std::log(0.4), 0;
  CHECK((p.vector() - expected).cwiseAbs().maxCoeff() == 0.0);

  const Grid g = build_grid(dom, 0.1);
  const std::vector<Point2> on_pixel{g.active_centers.col(1000)};
  CHECK(rasterize(init_splats(on_pixel, 0.005, 0.4, dom, 0.1), g).field.maxCoeff() == doctest::Approx(0.005).epsilon(1e-14));

  const std::vector<Point2> outside{Point2(5.0, 0.0), Point2(0.3, -0.2)};
  const SplatParams q = init_splats(outside, 0.005, 0.4, dom, 0.1);
  CHECK(q(0, kCenterX) == doctest::Approx(2.9));
  CHECK(q(1, kCenterX) == 0.3);
  for (int k = 0; k < 2; ++k) CHECK(q(k, kLogScaleX) == q(k, kLogScaleY));
}

TEST_CASE("regularization closed form") {
  std::mt19937_64 rng(2);
  const SplatParams p = random_params(rng, 4);
  HyperParams h = test_hyper(4);
  h.beta = 2.5;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(24);
  const double l = regularization_loss(p, h, &g);
  double expect = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double a = p(k, kLogAmplitude), d = p(k, kLogScaleX) - p(k, kLogScaleY);
    expect += a * a + h.beta * d * d;
    CHECK(g[6 * k + kLogAmplitude] == doctest::Approx(2 * h.lambda_r * a).epsilon(1e-14));
    CHECK(g[6 * k + kLogScaleX] == doctest::Approx(2 * h.lambda_r * h.beta * d).epsilon(1e-14));
    CHECK(g[6 * k + kLogScaleY] == doctest::Approx(-2 * h.lambda_r * h.beta * d).epsilon(1e-14));
    CHECK(g[6 * k + kCenterX] == 0.0);
    CHECK(g[6 * k + kAngle] == 0.0);
  }
  CHECK(l == doctest::Approx(h.lambda_r * expect).epsilon(1e-14));
}

TEST_CASE("repulsion") {
  const HyperParams h = test_hyper(2);
  auto pair_at = [](Point2 a, Point2 b) {
    return splats_at({{0.01, a, 0.3, 0.3, 0.0}, {0.01, b, 0.3, 0.3, 0.0}});
  };
  Eigen::VectorXd g = Eigen::VectorXd::Zero(12);
  CHECK(repulsion_loss(pair_at({0, 0}, {0.61, 0}), h, &g) == 0.0);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);

  const SplatParams close = pair_at({0.1, 0.2}, {0.35, -0.05});
  g.setZero();
  const double l = repulsion_loss(close, h, &g);
  const double d2 = 0.25 * 0.25 * 2;
  CHECK(l == doctest::Approx(h.lambda_p * std::exp(-d2 / (2 * h.rho_p * h.rho_p))).epsilon(1e-14));
  CHECK(g[kCenterX] == doctest::Approx(-g[6 + kCenterX]).epsilon(1e-14));
  CHECK(g[kCenterY] == doctest::Approx(-g[6 + kCenterY]).epsilon(1e-14));
  CHECK(g[kCenterX] > 0.0);  // a sits left of b: moving it further left lowers the loss

  // relabeling symmetry over a random set
  std::mt19937_64 rng(3);
  const SplatParams p = random_params(rng, 5);
  SplatParams rev = SplatParams::zeros(5);
  for (int k = 0; k < 5; ++k) rev.vector().segment(6 * k, 6) = p.vector().segment(6 * (4 - k), 6);
  HyperParams h5 = test_hyper(5);
  h5.r_p = 2.0;
  CHECK(repulsion_loss(p, h5, nullptr) == doctest::Approx(repulsion_loss(rev, h5, nullptr)).epsilon(1e-14));
}

TEST_CASE("data misfit: exact data gives zero loss and gradient") {
  const auto& sp = problem();
  const SplatParams p = splats_at({{0.02, Eigen::Vector2d(0.8, -0.5), 0.4, 0.3, 0.3}});
  const TpsfSet meas = measured_from(p, sp);
  HyperParams h = test_hyper(1);
  h.lambda_r = 0.0;
  h.lambda_p = 0.0;
  const DirectMisfit direct(sp.J, meas, sp.baseline);
  const LossEvaluation e = loss_and_grad(p, direct, sp.grid, h);
  CHECK(std::abs(e.loss.total) < 1e-28);
  CHECK(e.gradient.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(direct.eta() == doctest::Approx(std::pow(meas.values.maxCoeff(), 2) * 36).epsilon(1e-14));
}

TEST_CASE("normal-equation misfit matches the direct misfit") {
  const auto& sp = problem();
  std::mt19937_64 rng(4);
  const TpsfSet meas = measured_from(random_params(rng, 2), sp);
  const DirectMisfit direct(sp.J, meas, sp.baseline);
  const NormalEquationsMisfit normal(std::make_shared<const Eigen::MatrixXd>(gram_matrix(sp.J)), sp.J, meas, sp.baseline);
  const HyperParams h = test_hyper(3);
  for (int t = 0; t < 5; ++t) {
    const SplatParams p = random_params(rng, 3);
    const LossEvaluation a = loss_and_grad(p, direct, sp.grid, h), b = loss_and_grad(p, normal, sp.grid, h);
    CHECK(test::rel_err(a.loss.data, b.loss.data) < 1e-9);
    CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() <= 1e-8 * a.gradient.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("full gradient vs central differences") {
  const auto& sp = problem();
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const int k = 1 + t % 3;
    const TpsfSet meas = measured_from(random_params(rng, 2), sp);
    const DirectMisfit misfit(sp.J, meas, sp.baseline);
    HyperParams h = test_hyper(k);
    h.r_p = 5.0;  // keep every pair inside the cutoff, where the loss is smooth
    const SplatParams p = random_params(rng, k);
    const Eigen::VectorXd g = loss_and_grad(p, misfit, sp.grid, h).gradient;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      SplatParams hi = p, lo = p;
      hi.vector()[i] += 1e-6;
      lo.vector()[i] -= 1e-6;
      const double fd =
          (loss_and_grad(hi, misfit, sp.grid, h).loss.total - loss_and_grad(lo, misfit, sp.grid, h).loss.total) / 2e-6;
      const double denom = std::max({std::abs(g[i]), std::abs(fd), 1e-3 * g.cwiseAbs().maxCoeff()});
      worst = std::max(worst, std::abs(g[i] - fd) / denom);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("loss is invariant to a common rescaling of the signals") {
  const auto& sp = problem();
  std::mt19937_64 rng(6);
  const SplatParams truth = random_params(rng, 2), guess = random_params(rng, 2);
  const TpsfSet meas = measured_from(truth, sp);
  const DirectMisfit m1(sp.J, meas, sp.baseline);

  SensitivityMatrix J4 = sp.J;
  J4.entries *= 4.0f;  // power of two: exact in single precision
  TpsfSet meas4 = meas, base4 = sp.baseline;
  meas4.values *= 4.0;
  base4.values *= 4.0;
  const DirectMisfit m4(J4, meas4, base4);
  const HyperParams h = test_hyper(2);
  const LossEvaluation a = loss_and_grad(guess, m1, sp.grid, h), b = loss_and_grad(guess, m4, sp.grid, h);
  CHECK(test::rel_err(a.loss.total, b.loss.total) < 1e-12);
  CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() <= 1e-10 * a.gradient.cwiseAbs().maxCoeff());
}

TEST_CASE("non-finite loss names the term") {
  const auto& sp = problem();
  const DirectMisfit misfit(sp.J, sp.baseline, sp.baseline);
  SplatParams p = splats_at({{0.01, Eigen::Vector2d::Zero(), 0.3, 0.3, 0.0}});
  p(0, kLogAmplitude) = 800.0;  // amplitude overflows
  try {
    loss_and_grad(p, misfit, sp.grid, test_hyper(1));
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
    CHECK(std::string(e.what()).find("data") != std::string::npos);
  }
}

TEST_CASE("Adam") {
  HyperParams h;
  SplatParams p = SplatParams::zeros(2);
  p.vector().setLinSpaced(-1.0, 1.0);
  const Eigen::VectorXd before = p.vector();
  AdamState s = AdamState::zeros(12);
  adam_step(s, p, Eigen::VectorXd::Zero(12), h);
  CHECK(p.vector() == before);
  CHECK(s.first_moment.isZero(0));
  CHECK(s.second_moment.isZero(0));
  CHECK(s.step == 1);

  Eigen::VectorXd g(12);
  g << 3, -2, 1e-3, -5e2, 7, -1, 2, 2, -2, 4e-2, -9, 1;
  AdamState s2 = AdamState::zeros(12);
  SplatParams q = p;
  adam_step(s2, q, g, h);
  const Eigen::VectorXd lr = learning_rate_vector(h, 2);
  for (int i = 0; i < 12; ++i) CHECK(q.vector()[i] - p.vector()[i] == doctest::Approx(-lr[i] * (g[i] > 0 ? 1 : -1)).epsilon(1e-5));

  AdamState s3 = AdamState::zeros(12);
  SplatParams r = p;
  adam_step(s3, r, g, h);
  CHECK(r.vector() == q.vector());
  CHECK(s3.first_moment == s2.first_moment);
}

TEST_CASE("center projection") {
  const Domain dom;
  SplatParams p = splats_at({{0.01, Eigen::Vector2d(1, 1), 0.3, 0.3, 0.2}, {0.01, Eigen::Vector2d(4, 0), 0.5, 0.2, 0.1}});
  const Eigen::VectorXd before = p.vector();
  project_centers(p, dom, 0.1);
  CHECK(p(0, kCenterX) == 1.0);
  CHECK(p(0, kCenterY) == 1.0);
  CHECK(p(1, kCenterX) == doctest::Approx(2.9));
  CHECK(p(1, kCenterY) == 0.0);
  for (int role : {kLogAmplitude, kLogScaleX, kLogScaleY, kAngle})
    CHECK(p(1, ParamRole(role)) == before[6 + role]);
  const Eigen::VectorXd once = p.vector();
  project_centers(p, dom, 0.1);
  CHECK(p.vector() == once);
}

TEST_CASE("center projection is idempotent to the bit") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> pos(-9.0, 9.0);
  for (const Domain dom : {Domain{}, Domain{2.7, Point2(0.3, -1.1)}}) {
    for (int t = 0; t < 500; ++t) {
      SplatParams p = splats_at({{0.01, Eigen::Vector2d(pos(rng), pos(rng)), 0.3, 0.3, 0.0}});
      project_centers(p, dom, 0.1);
      CHECK((Point2(p(0, kCenterX), p(0, kCenterY)) - dom.center).norm() <= dom.radius_cm - 0.1);
      const Eigen::VectorXd once = p.vector();
      project_centers(p, dom, 0.1);
      CHECK(p.vector() == once);
    }
  }
}

TEST_CASE("reconstruction: null data") {
  const auto& sp = full_problem();
  const NormalEquationsMisfit misfit(std::make_shared<const Eigen::MatrixXd>(gram_matrix(sp.J)), sp.J, sp.baseline, sp.baseline);
  HyperParams h;
  h.n_splats = 2;
  const ReconstructionResult r =
      reconstruct(InverseProblem{sp.J, sp.baseline, sp.baseline, sp.grid, sp.domain, sp.props.mu_a}, misfit, h);
  CHECK(r.delta_mu_a.maxCoeff() < 0.1 * h.alpha_init);
}

TEST_CASE("reconstruction: loop invariants and determinism") {
  const auto& sp = problem();
  const TpsfSet meas = measured_from(splats_at({{0.02, Eigen::Vector2d(1.0, 0.5), 0.45, 0.45, 0.0}}), sp);
  const NormalEquationsMisfit misfit(std::make_shared<const Eigen::MatrixXd>(gram_matrix(sp.J)), sp.J, meas, sp.baseline);
  HyperParams h;
  h.n_iters = 200;
  const InverseProblem prob{sp.J, meas, sp.baseline, sp.grid, sp.domain, sp.props.mu_a};
  const ReconstructionResult a = reconstruct(prob, misfit, h), b = reconstruct(prob, misfit, h);

  CHECK(a.params.vector() == b.params.vector());
  CHECK(a.delta_mu_a == b.delta_mu_a);
  REQUIRE(a.trace.size() == std::size_t(h.n_iters) + 1);
  for (const auto& l : a.trace) CHECK(a.best_loss <= l.total);
  CHECK(a.trace[std::size_t(a.best_iteration)].total == a.best_loss);
  CHECK(a.best_loss < a.trace.front().total);
  CHECK((a.total_mu_a.array() - a.delta_mu_a.array() - sp.props.mu_a).abs().maxCoeff() < 1e-15);
  CHECK((a.delta_mu_a - rasterize(a.params, sp.grid, h.support_sigmas).field).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < a.params.count(); ++k)
    CHECK(std::hypot(a.params(k, kCenterX), a.params(k, kCenterY)) <= 3.0 - h.center_margin_cm + 1e-12);
  // the single splat lands on the inclusion
  CHECK(std::hypot(a.params(0, kCenterX) - 1.0, a.params(0, kCenterY) - 0.5) < 0.2);
}

TEST_CASE("divergence aborts with the iteration") {
  const auto& sp = problem();
  const TpsfSet meas = measured_from(splats_at({{0.02, Eigen::Vector2d(1.0, 0.5), 0.45, 0.45, 0.0}}), sp);
  const DirectMisfit misfit(sp.J, meas, sp.baseline);
  HyperParams h;
  h.n_iters = 50;
  h.lr.log_amplitude = 400.0;
  try {
    reconstruct(InverseProblem{sp.J, meas, sp.baseline, sp.grid, sp.domain, sp.props.mu_a}, misfit, h);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.code() == ErrorCode::Divergence);
    CHECK(e.iteration() > 0);
    CHECK(e.theta().size() == 6);
  }
}

TEST_CASE("compression") {
  const CompressionReport r = compression(6, 4096);
  CHECK(r.n_unknowns == 36);
  CHECK(r.ratio == doctest::Approx(4096.0 / 36.0));
  CHECK(std::lround(r.ratio) == 114);
  CHECK(compression(1, 2184).ratio == 364.0);
  CHECK(compression(16, 2184).ratio == 22.75);
  CHECK_THROWS_AS(compression(0, 10), Error);
}
