#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Core>

#include "gsdot/error.hpp"
#include "gsdot/geometry.hpp"

namespace gsdot {

inline constexpr double kSpeedOfLightCmPerNs = 29.9792458;

struct OpticalProperties {
  double mu_a = 0.01;        // cm^-1
  double mu_s_prime = 10.0;  // cm^-1
  double refractive_index = 1.4;

  /// 2D diffusion coefficient, D = 1 / (2 mu_s').
  double diffusion() const { return 1.0 / (2.0 * mu_s_prime); }
  double speed() const { return kSpeedOfLightCmPerNs / refractive_index; }

  void validate() const;
  /// True when the diffusion regime assumption mu_s' >> mu_a is questionable.
  bool weakly_scattering() const { return mu_a / mu_s_prime > 0.1; }
};

/// Infinite-medium time-domain Green's function of the 2D diffusion equation.
/// Zero for t <= 0.
template <typename Scalar>
Scalar green2d(Scalar rho_cm, Scalar t_ns, const OpticalProperties& props) {
  using std::exp;
  if (t_ns <= Scalar(0)) return Scalar(0);
  const Scalar dv = Scalar(props.diffusion() * props.speed());
  const Scalar four_dvt = Scalar(4) * dv * t_ns;
  return exp(-rho_cm * rho_cm / four_dvt - Scalar(props.mu_a * props.speed()) * t_ns) /
         (Scalar(std::numbers::pi) * four_dvt);
}

/// Checked scalar entry point.
double green2d_checked(double rho_cm, double t_ns, const OpticalProperties& props);

/// Time series for every (source, detector) pair, stored flat in
/// source-major, then detector, then time-bin order (the Jacobian row order).
struct TpsfSet {
  int n_sources = 0;
  int n_detectors = 0;
  int n_bins = 0;
  Eigen::VectorXd values;

  TpsfSet() = default;
  TpsfSet(int n_src, int n_det, int n_t)
      : n_sources(n_src), n_detectors(n_det), n_bins(n_t),
        values(Eigen::VectorXd::Zero(Eigen::Index(n_src) * n_det * n_t)) {}

  Eigen::Index row(int s, int d, int j) const {
    return (Eigen::Index(s) * n_detectors + d) * n_bins + j;
  }
  double operator()(int s, int d, int j) const { return values[row(s, d, j)]; }
  double& operator()(int s, int d, int j) { return values[row(s, d, j)]; }

  auto pair(int s, int d) { return values.segment(row(s, d, 0), n_bins); }
  auto pair(int s, int d) const { return values.segment(row(s, d, 0), n_bins); }

  Eigen::Index size() const { return values.size(); }
  bool same_shape(const TpsfSet& other) const {
    return n_sources == other.n_sources && n_detectors == other.n_detectors &&
           n_bins == other.n_bins;
  }
};

TpsfSet baseline_tpsf(const OptodeArray& optodes, const OpticalProperties& props,
                      const TimeAxis& time);

/// Causal discrete convolution out[j] = dt * sum_{m<=j} a[m] b[j-m].
Eigen::VectorXd temporal_convolve(const Eigen::Ref<const Eigen::VectorXd>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b, double dt_ns);

/// Quantities the Jacobian was assembled from; also the binary cache header.
struct JacobianLayout {
  std::uint32_t n_sources = 0;
  std::uint32_t n_detectors = 0;
  std::uint32_t n_bins = 0;
  std::uint32_t n_pixels = 0;
  double dt_ns = 0.0;
  double resolution_cm = 0.0;
  double radius_cm = 0.0;
  double mu_a = 0.0;
  double mu_s_prime = 0.0;
  double refractive_index = 0.0;

  bool operator==(const JacobianLayout&) const = default;
};

/// Born sensitivity matrix. Rows are (source, detector, time bin) in
/// TpsfSet order, columns are active pixels. The pixel area is folded into
/// the entries so the Born integral is a plain matrix-vector product.
struct SensitivityMatrix {
  JacobianLayout layout;
  Eigen::MatrixXf entries;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
  std::size_t bytes() const { return std::size_t(entries.size()) * sizeof(float); }
};

JacobianLayout jacobian_layout(const OptodeArray& optodes, const Grid& grid, const Domain& domain,
                               const OpticalProperties& props, const TimeAxis& time);

/// Sensitivity series -v * [G(rho_src) * G(rho_det)](t_j) (without pixel area),
/// in double precision.
///
/// The convolution is evaluated by product integration: each time bin is
/// split at t/2, the half nearer the singular end of one Green's function
/// integrates that function exactly over the bin (exponential integral) and
/// takes the other at the bin midpoint. This stays accurate for pixels a few
/// picoseconds of diffusion time away from an optode, where sampling the
/// Green's functions at the bin edges does not.
Eigen::VectorXd sensitivity_series(double rho_src_cm, double rho_det_cm,
                                   const OpticalProperties& props, const TimeAxis& time);

/// Builds the dense sensitivity matrix. Throws when the matrix would exceed
/// `max_bytes`, reporting the required size.
SensitivityMatrix build_jacobian(const OptodeArray& optodes, const Grid& grid, const Domain& domain,
                                 const OpticalProperties& props, const TimeAxis& time,
                                 std::size_t max_bytes = std::size_t(2) << 30);

/// J * dmu with double accumulation; columns with dmu == 0 are skipped.
Eigen::VectorXd apply_jacobian(const SensitivityMatrix& J, const Eigen::Ref<const Eigen::VectorXd>& dmu);

/// J^T * r with double accumulation.
Eigen::VectorXd apply_jacobian_transpose(const SensitivityMatrix& J,
                                         const Eigen::Ref<const Eigen::VectorXd>& r);

/// Born prediction: baseline + J * dmu.
TpsfSet born_forward(const SensitivityMatrix& J, const Eigen::Ref<const Eigen::VectorXd>& dmu,
                     const TpsfSet& baseline);

struct NoiseModel {
  double target_level = 0.02;
  std::uint64_t seed = 0;
};

/// Photon-counting noise per source-detector pair: the TPSF is scaled to
/// mean counts whose peak bin holds 1/target^2 photons, every bin gets an
/// independent Poisson draw, and the result is rescaled to the clean total.
TpsfSet apply_noise(const TpsfSet& clean, const NoiseModel& model);

}  // namespace gsdot
