#include "gsdot/inverse.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "gsdot/error.hpp"

namespace gsdot {

void HyperParams::validate() const {
  if (n_splats < 1) throw_invalid("solver: number of splats must be at least 1");
  if (lambda_r < 0.0 || beta < 0.0 || lambda_p < 0.0 || r_p < 0.0) {
    throw_invalid("solver: loss weights must be non-negative");
  }
  if (!(rho_p > 0.0)) throw_invalid("solver: repulsion falloff must be positive");
  if (!(eps_bp_rel > 0.0)) throw_invalid("solver: backprojection stabilizer must be positive");
  if (!(alpha_init > 0.0) || !(s_init > 0.0)) throw_invalid("solver: initial amplitude and scale must be positive");
  if (!(support_sigmas > 0.0)) throw_invalid("solver: support width must be positive");
  if (suppression_radius_cm < 0.0 || center_margin_cm < 0.0) throw_invalid("solver: radii must be non-negative");
  if (n_iters < 0) throw_invalid("solver: iteration count must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw_invalid("solver: Adam moments must lie in [0, 1) and epsilon must be positive");
  }
  if (lr.log_amplitude < 0.0 || lr.center < 0.0 || lr.log_scale < 0.0 || lr.angle < 0.0) {
    throw_invalid("solver: learning rates must be non-negative");
  }
}

Eigen::VectorXd learning_rate_vector(const HyperParams& hyper, int n_splats) {
  Eigen::Matrix<double, kParamsPerSplat, 1> block;
  block[kLogAmplitude] = hyper.lr.log_amplitude;
  block[kCenterX] = hyper.lr.center;
  block[kCenterY] = hyper.lr.center;
  block[kLogScaleX] = hyper.lr.log_scale;
  block[kLogScaleY] = hyper.lr.log_scale;
  block[kAngle] = hyper.lr.angle;
  return block.replicate(n_splats, 1);
}

// ---------------------------------------------------------------------------

double max_column_energy(const SensitivityMatrix& J) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < J.cols(); ++i) {
    best = std::max(best, J.entries.col(i).cast<double>().squaredNorm());
  }
  return best;
}

Eigen::VectorXd backproject(const SensitivityMatrix& J, const TpsfSet& residual, double eps) {
  if (residual.size() != J.rows()) throw_invalid("backproject: residual does not match J rows");
  if (!(eps > 0.0)) throw_invalid("backproject: stabilizer must be positive");
  Eigen::VectorXd image(J.cols());
  for (Eigen::Index i = 0; i < J.cols(); ++i) {
    const auto column = J.entries.col(i).cast<double>();
    image[i] = column.dot(residual.values) / (column.squaredNorm() + eps);
  }
  return image;
}

PeakSeeds find_peaks(const Eigen::Ref<const Eigen::VectorXd>& image, const Grid& grid, int n_peaks,
                     double suppression_radius_cm) {
  if (n_peaks < 1) throw_invalid("find_peaks: need at least one peak");
  if (image.size() != grid.n_active()) throw_invalid("find_peaks: image does not match grid");
  constexpr double excluded = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd work = image;
  PeakSeeds seeds;
  const double r2 = suppression_radius_cm * suppression_radius_cm;
  for (int k = 0; k < n_peaks; ++k) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < work.size(); ++i) {
      if (work[i] != excluded && (best < 0 || work[i] > work[best])) best = i;
    }
    if (best < 0) {
      // Every pixel is suppressed: fall back to the pixel farthest from all seeds.
      double far = -1.0;
      for (Eigen::Index i = 0; i < work.size(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const Point2& c : seeds.centers) {
          nearest = std::min(nearest, (grid.active_centers.col(i) - c).squaredNorm());
        }
        if (nearest > far) {
          far = nearest;
          best = i;
        }
      }
      seeds.centers.push_back(grid.active_centers.col(best));
      seeds.flagged.push_back(true);
      continue;
    }
    const Point2 center = grid.active_centers.col(best);
    seeds.centers.push_back(center);
    seeds.flagged.push_back(!(work[best] > 0.0));
    for (Eigen::Index i = 0; i < work.size(); ++i) {
      if ((grid.active_centers.col(i) - center).squaredNorm() < r2) work[i] = excluded;
    }
    work[best] = excluded;
  }
  return seeds;
}

namespace {

Point2 clamp_to_disc(const Point2& p, const Domain& domain, double margin_cm) {
  const double limit = std::max(0.0, domain.radius_cm - margin_cm);
  const Point2 rel = p - domain.center;
  const double r = rel.norm();
  if (r <= limit) return p;
  // Rounding can leave the scaled point an ulp outside, and a second clamp
  // would then move it again; shrink until it is inside so clamping is idempotent.
  double factor = limit / r;
  Point2 q = domain.center + rel * factor;
  while ((q - domain.center).norm() > limit) {
    factor = std::nextafter(factor, 0.0);
    q = domain.center + rel * factor;
  }
  return q;
}

}  // namespace

SplatParams init_splats(std::span<const Point2> centers, double alpha_init, double s_init,
                        const Domain& domain, double margin_cm) {
  if (!(alpha_init > 0.0) || !(s_init > 0.0)) throw_invalid("init_splats: amplitude and scale must be positive");
  SplatParams params = SplatParams::zeros(static_cast<int>(centers.size()));
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const Point2 c = clamp_to_disc(centers[k], domain, margin_cm);
    const int kk = static_cast<int>(k);
    params(kk, kLogAmplitude) = std::log(alpha_init);
    params(kk, kCenterX) = c.x();
    params(kk, kCenterY) = c.y();
    params(kk, kLogScaleX) = std::log(s_init);
    params(kk, kLogScaleY) = std::log(s_init);
    params(kk, kAngle) = 0.0;
  }
  return params;
}

// ---------------------------------------------------------------------------

double loss_normalization(const TpsfSet& measured) {
  const double peak = measured.values.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) throw_invalid("measured TPSFs are identically zero");
  return peak * peak * measured.n_sources * measured.n_detectors;
}

DirectMisfit::DirectMisfit(const SensitivityMatrix& J, const TpsfSet& measured, const TpsfSet& baseline)
    : J_(J) {
  if (!measured.same_shape(baseline) || measured.size() != J.rows()) {
    throw_invalid("misfit: measured, baseline and J do not agree in shape");
  }
  target_ = measured.values - baseline.values;
  eta_ = loss_normalization(measured);
}

double DirectMisfit::evaluate(const Eigen::VectorXd& field, std::span<const int> columns,
                              Eigen::VectorXd* field_grad) const {
  Eigen::VectorXd residual = -target_;
  for (int i : columns) {
    if (field[i] != 0.0) residual.noalias() += field[i] * J_.entries.col(i).cast<double>();
  }
  if (field_grad) {
    field_grad->setZero(J_.cols());
    for (int i : columns) (*field_grad)[i] = J_.entries.col(i).cast<double>().dot(residual) / eta_;
  }
  return 0.5 * residual.squaredNorm() / eta_;
}

Eigen::MatrixXd gram_matrix(const SensitivityMatrix& J) {
  constexpr Eigen::Index kBlock = 1024;
  const Eigen::Index n = J.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd block;
  for (Eigen::Index r0 = 0; r0 < J.rows(); r0 += kBlock) {
    const Eigen::Index nb = std::min(kBlock, J.rows() - r0);
    block = J.entries.middleRows(r0, nb).cast<double>();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  return gram;
}

NormalEquationsMisfit::NormalEquationsMisfit(std::shared_ptr<const Eigen::MatrixXd> gram,
                                             const SensitivityMatrix& J, const TpsfSet& measured,
                                             const TpsfSet& baseline)
    : gram_(std::move(gram)) {
  if (!measured.same_shape(baseline) || measured.size() != J.rows()) {
    throw_invalid("misfit: measured, baseline and J do not agree in shape");
  }
  if (!gram_ || gram_->rows() != J.cols() || gram_->cols() != J.cols()) {
    throw_invalid("misfit: Gram matrix does not match J");
  }
  const Eigen::VectorXd target = measured.values - baseline.values;
  projected_target_ = apply_jacobian_transpose(J, target);
  target_energy_ = target.squaredNorm();
  eta_ = loss_normalization(measured);
}

double NormalEquationsMisfit::evaluate(const Eigen::VectorXd& field, std::span<const int> columns,
                                       Eigen::VectorXd* field_grad) const {
  const Eigen::MatrixXd& gram = *gram_;
  Eigen::VectorXd gf = Eigen::VectorXd::Zero(gram.rows());
  for (int i : columns) {
    if (field[i] != 0.0) gf.noalias() += field[i] * gram.col(i);
  }
  double quad = 0.0;
  double lin = 0.0;
  for (int i : columns) {
    quad += field[i] * gf[i];
    lin += field[i] * projected_target_[i];
  }
  if (field_grad) {
    field_grad->setZero(gram.rows());
    for (int i : columns) (*field_grad)[i] = (gf[i] - projected_target_[i]) / eta_;
  }
  // ||J f - y||^2 = f'J'J f - 2 f'J'y + y'y, clamped against rounding below zero.
  return 0.5 * std::max(0.0, quad - 2.0 * lin + target_energy_) / eta_;
}

double regularization_loss(const SplatParams& params, const HyperParams& hyper, Eigen::VectorXd* grad) {
  double amp = 0.0;
  double aniso = 0.0;
  for (int k = 0; k < params.count(); ++k) {
    const double a = params(k, kLogAmplitude);
    const double diff = params(k, kLogScaleX) - params(k, kLogScaleY);
    amp += a * a;
    aniso += diff * diff;
    if (grad) {
      const Eigen::Index base = Eigen::Index(k) * kParamsPerSplat;
      (*grad)[base + kLogAmplitude] += 2.0 * hyper.lambda_r * a;
      (*grad)[base + kLogScaleX] += 2.0 * hyper.lambda_r * hyper.beta * diff;
      (*grad)[base + kLogScaleY] -= 2.0 * hyper.lambda_r * hyper.beta * diff;
    }
  }
  return hyper.lambda_r * (amp + hyper.beta * aniso);
}

double repulsion_loss(const SplatParams& params, const HyperParams& hyper, Eigen::VectorXd* grad) {
  double loss = 0.0;
  const double inv_rho2 = 1.0 / (hyper.rho_p * hyper.rho_p);
  for (int a = 0; a < params.count(); ++a) {
    for (int b = a + 1; b < params.count(); ++b) {
      const Point2 diff(params(a, kCenterX) - params(b, kCenterX),
                        params(a, kCenterY) - params(b, kCenterY));
      const double d2 = diff.squaredNorm();
      if (!(std::sqrt(d2) < hyper.r_p)) continue;
      const double term = hyper.lambda_p * std::exp(-0.5 * d2 * inv_rho2);
      loss += term;
      if (grad) {
        const Point2 g = -term * inv_rho2 * diff;  // d term / d c_a
        (*grad)[Eigen::Index(a) * kParamsPerSplat + kCenterX] += g.x();
        (*grad)[Eigen::Index(a) * kParamsPerSplat + kCenterY] += g.y();
        (*grad)[Eigen::Index(b) * kParamsPerSplat + kCenterX] -= g.x();
        (*grad)[Eigen::Index(b) * kParamsPerSplat + kCenterY] -= g.y();
      }
    }
  }
  return loss;
}

namespace {

std::vector<int> support_union(const std::vector<std::vector<int>>& supports, int n_active) {
  std::vector<char> mark(std::size_t(n_active), 0);
  for (const auto& s : supports) {
    for (int i : s) mark[std::size_t(i)] = 1;
  }
  std::vector<int> columns;
  for (int i = 0; i < n_active; ++i) {
    if (mark[std::size_t(i)]) columns.push_back(i);
  }
  return columns;
}

void require_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NonFiniteLoss, std::string("non-finite loss term: ") + term);
  }
}

}  // namespace

LossEvaluation loss_and_grad(const SplatParams& params, const DataMisfit& misfit, const Grid& grid,
                             const HyperParams& hyper) {
  LossEvaluation out;
  const SplatFieldEval eval = rasterize(params, grid, hyper.support_sigmas);
  const std::vector<int> columns = support_union(eval.supports, grid.n_active());

  Eigen::VectorXd pixel_grad;
  out.loss.data = misfit.evaluate(eval.field, columns, &pixel_grad);
  require_finite(out.loss.data, "data");
  out.gradient = pullback_field_gradient(params, grid, pixel_grad, hyper.support_sigmas);

  out.loss.reg = regularization_loss(params, hyper, &out.gradient);
  require_finite(out.loss.reg, "regularization");
  out.loss.rep = repulsion_loss(params, hyper, &out.gradient);
  require_finite(out.loss.rep, "repulsion");
  out.loss.total = out.loss.data + out.loss.reg + out.loss.rep;
  if (!out.gradient.allFinite()) throw Error(ErrorCode::NonFiniteLoss, "non-finite loss gradient");
  return out;
}

// ---------------------------------------------------------------------------

void adam_step(AdamState& state, SplatParams& params, const Eigen::Ref<const Eigen::VectorXd>& grad,
               const HyperParams& hyper) {
  Eigen::VectorXd& theta = params.vector();
  if (grad.size() != theta.size() || state.first_moment.size() != theta.size() ||
      state.second_moment.size() != theta.size()) {
    throw_invalid("adam_step: shape mismatch");
  }
  const Eigen::VectorXd rates = learning_rate_vector(hyper, params.count());
  state.step += 1;
  state.first_moment = hyper.adam_beta1 * state.first_moment + (1.0 - hyper.adam_beta1) * grad;
  state.second_moment =
      hyper.adam_beta2 * state.second_moment + (1.0 - hyper.adam_beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.adam_beta1, state.step);
  const double c2 = 1.0 - std::pow(hyper.adam_beta2, state.step);
  const Eigen::ArrayXd m_hat = state.first_moment.array() / c1;
  const Eigen::ArrayXd v_hat = state.second_moment.array() / c2;
  theta.array() -= rates.array() * m_hat / (v_hat.sqrt() + hyper.adam_eps);
}

void project_centers(SplatParams& params, const Domain& domain, double margin_cm) {
  for (int k = 0; k < params.count(); ++k) {
    const Point2 c = clamp_to_disc(Point2(params(k, kCenterX), params(k, kCenterY)), domain, margin_cm);
    params(k, kCenterX) = c.x();
    params(k, kCenterY) = c.y();
  }
}

ReconstructionResult reconstruct(const InverseProblem& problem, const DataMisfit& misfit,
                                 const HyperParams& hyper) {
  hyper.validate();
  const auto start = std::chrono::steady_clock::now();
  if (!problem.measured.same_shape(problem.baseline) || problem.measured.size() != problem.J.rows() ||
      problem.J.cols() != problem.grid.n_active()) {
    throw_invalid("reconstruct: data, Jacobian and grid are inconsistent");
  }

  ReconstructionResult result;
  TpsfSet residual = problem.measured;
  residual.values -= problem.baseline.values;
  const double eps = hyper.eps_bp_rel * max_column_energy(problem.J);
  result.backprojection = backproject(problem.J, residual, eps);
  result.seeds = find_peaks(result.backprojection, problem.grid, hyper.n_splats, hyper.suppression_radius_cm);
  SplatParams params = init_splats(result.seeds.centers, hyper.alpha_init, hyper.s_init, problem.domain,
                                   hyper.center_margin_cm);
  result.initial_params = params;

  AdamState state = AdamState::zeros(params.vector().size());
  result.best_loss = std::numeric_limits<double>::infinity();
  result.trace.reserve(std::size_t(hyper.n_iters) + 1);
  for (int it = 0; it <= hyper.n_iters; ++it) {
    LossEvaluation eval;
    try {
      eval = loss_and_grad(params, misfit, problem.grid, hyper);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteLoss) throw;
      throw DivergenceError(it, params.vector(),
                            std::string(e.what()) + " at iteration " + std::to_string(it));
    }
    result.trace.push_back(eval.loss);
    if (eval.loss.total < result.best_loss) {
      result.best_loss = eval.loss.total;
      result.best_iteration = it;
      result.params = params;
    }
    if (it == hyper.n_iters) break;
    adam_step(state, params, eval.gradient, hyper);
    project_centers(params, problem.domain, hyper.center_margin_cm);
  }

  result.delta_mu_a = rasterize(result.params, problem.grid, hyper.support_sigmas).field;
  result.total_mu_a = result.delta_mu_a.array() + problem.background_mu_a;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

CompressionReport compression(int n_splats, int n_pixels) {
  if (n_splats < 1 || n_pixels < 1) throw_invalid("compression: counts must be positive");
  CompressionReport report;
  report.n_splats = n_splats;
  report.n_unknowns = kParamsPerSplat * n_splats;
  report.n_pixels = n_pixels;
  report.ratio = static_cast<double>(n_pixels) / report.n_unknowns;
  return report;
}

}  // namespace gsdot
