#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gsdot/forward.hpp"
#include "gsdot/geometry.hpp"
#include "gsdot/splats.hpp"

namespace gsdot {

struct LearningRates {
  double log_amplitude = 0.05;
  double center = 0.01;  // cm
  double log_scale = 0.01;
  double angle = 0.02;
};

struct HyperParams {
  int n_splats = 1;
  double lambda_r = 1e-9;  // log-amplitude / anisotropy regularization weight
  double beta = 300.0;     // isotropy penalty weight (inside lambda_r)
  double lambda_p = 1e-3;  // repulsion weight
  double rho_p = 0.3;      // repulsion falloff, cm
  double r_p = 0.6;        // repulsion cutoff, cm
  double eps_bp_rel = 1e-12;  // backprojection stabilizer, relative to max sum J^2
  double alpha_init = 0.005;  // cm^-1
  double s_init = 0.4;        // cm
  double suppression_radius_cm = 0.6;
  double support_sigmas = kDefaultSupportSigmas;
  double center_margin_cm = 0.1;
  int n_iters = 800;
  LearningRates lr;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Learning rate for each entry of the flattened parameter vector.
Eigen::VectorXd learning_rate_vector(const HyperParams& hyper, int n_splats);

// ---------------------------------------------------------------------------
// Initialization

Eigen::VectorXd backproject(const SensitivityMatrix& J, const TpsfSet& residual, double eps);

/// Max over pixels of sum_t J^2; the backprojection stabilizer is relative to it.
double max_column_energy(const SensitivityMatrix& J);

struct PeakSeeds {
  std::vector<Point2> centers;
  /// True for seeds taken where the image was no longer positive.
  std::vector<bool> flagged;
};

/// Greedy peak picking: take the argmax, exclude a disc around it, repeat.
/// Ties go to the lowest active-pixel index.
PeakSeeds find_peaks(const Eigen::Ref<const Eigen::VectorXd>& image, const Grid& grid, int n_peaks,
                     double suppression_radius_cm);

/// Isotropic splats at the given centers; centers outside the domain are
/// pulled inside first.
SplatParams init_splats(std::span<const Point2> centers, double alpha_init, double s_init,
                        const Domain& domain, double margin_cm);

// ---------------------------------------------------------------------------
// Loss

/// Data term 1/(2 eta) * ||J f + baseline - measured||^2 as a function of the
/// field f on the active pixels, with eta = max(measured)^2 * N_s * N_d.
class DataMisfit {
 public:
  virtual ~DataMisfit() = default;

  /// `field` is nonzero only on `columns` (ascending active-pixel indices).
  /// When `field_grad` is given it receives d loss / d field on `columns`
  /// and zero elsewhere.
  virtual double evaluate(const Eigen::VectorXd& field, std::span<const int> columns,
                          Eigen::VectorXd* field_grad) const = 0;

  double eta() const { return eta_; }

 protected:
  double eta_ = 1.0;
};

double loss_normalization(const TpsfSet& measured);

/// Evaluates the residual through J directly; cost O(rows * |columns|).
class DirectMisfit final : public DataMisfit {
 public:
  DirectMisfit(const SensitivityMatrix& J, const TpsfSet& measured, const TpsfSet& baseline);
  double evaluate(const Eigen::VectorXd& field, std::span<const int> columns,
                  Eigen::VectorXd* field_grad) const override;

 private:
  const SensitivityMatrix& J_;
  Eigen::VectorXd target_;  // measured - baseline
};

/// J^T J in double precision, accumulated over row blocks.
Eigen::MatrixXd gram_matrix(const SensitivityMatrix& J);

/// Expands the squared residual through the Gram matrix; cost O(|columns|^2)
/// per evaluation once J^T J is known.
class NormalEquationsMisfit final : public DataMisfit {
 public:
  NormalEquationsMisfit(std::shared_ptr<const Eigen::MatrixXd> gram, const SensitivityMatrix& J,
                        const TpsfSet& measured, const TpsfSet& baseline);
  double evaluate(const Eigen::VectorXd& field, std::span<const int> columns,
                  Eigen::VectorXd* field_grad) const override;

 private:
  std::shared_ptr<const Eigen::MatrixXd> gram_;
  Eigen::VectorXd projected_target_;  // J^T (measured - baseline)
  double target_energy_ = 0.0;        // ||measured - baseline||^2
};

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0;
  double reg = 0.0;
  double rep = 0.0;
};

struct LossEvaluation {
  LossBreakdown loss;
  Eigen::VectorXd gradient;
};

/// lambda_r * [sum a~^2 + beta * sum (s~x - s~y)^2]; adds its gradient to `grad` when given.
double regularization_loss(const SplatParams& params, const HyperParams& hyper,
                           Eigen::VectorXd* grad);

/// lambda_p * sum_{a<b} exp(-|c_a - c_b|^2 / (2 rho_p^2)) * 1[|c_a - c_b| < r_p].
/// The indicator is treated as locally constant in the gradient.
double repulsion_loss(const SplatParams& params, const HyperParams& hyper, Eigen::VectorXd* grad);

LossEvaluation loss_and_grad(const SplatParams& params, const DataMisfit& misfit, const Grid& grid,
                             const HyperParams& hyper);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  int step = 0;

  static AdamState zeros(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  }
};

/// Bias-corrected Adam update with per-parameter-role learning rates.
void adam_step(AdamState& state, SplatParams& params, const Eigen::Ref<const Eigen::VectorXd>& grad,
               const HyperParams& hyper);

/// Radially clamps every center to |c - domain.center| <= R - margin.
void project_centers(SplatParams& params, const Domain& domain, double margin_cm);

struct ReconstructionResult {
  SplatParams initial_params;
  SplatParams params;  // best iterate
  PeakSeeds seeds;
  Eigen::VectorXd backprojection;
  Eigen::VectorXd delta_mu_a;  // over active pixels
  Eigen::VectorXd total_mu_a;  // background + delta_mu_a
  std::vector<LossBreakdown> trace;
  int best_iteration = 0;
  double best_loss = 0.0;
  double wall_seconds = 0.0;
};

struct InverseProblem {
  const SensitivityMatrix& J;
  const TpsfSet& measured;
  const TpsfSet& baseline;
  const Grid& grid;
  Domain domain;
  double background_mu_a = 0.01;
};

/// backproject -> find_peaks -> init_splats -> n_iters x (loss, Adam,
/// projection), returning the lowest-loss iterate.
ReconstructionResult reconstruct(const InverseProblem& problem, const DataMisfit& misfit,
                                 const HyperParams& hyper);

/// Unknowns per representation: 6K for splats against N_g for a pixel basis.
struct CompressionReport {
  int n_splats = 0;
  int n_unknowns = 0;
  int n_pixels = 0;
  double ratio = 0.0;
};

CompressionReport compression(int n_splats, int n_pixels);

}  // namespace gsdot
