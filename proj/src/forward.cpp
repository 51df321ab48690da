#include "gsdot/forward.hpp"

#include <cmath>
#include <random>
#include <string>

namespace gsdot {

void OpticalProperties::validate() const {
  if (!(mu_a > 0.0) || !(mu_s_prime > 0.0) || !(refractive_index > 0.0) || !std::isfinite(mu_a) ||
      !std::isfinite(mu_s_prime) || !std::isfinite(refractive_index)) {
    throw_invalid("optical properties must be positive and finite");
  }
}

double green2d_checked(double rho_cm, double t_ns, const OpticalProperties& props) {
  if (!std::isfinite(rho_cm) || !std::isfinite(t_ns)) throw_invalid("green2d: non-finite input");
  if (rho_cm < 0.0) throw_invalid("green2d: negative distance");
  return green2d(rho_cm, t_ns, props);
}

TpsfSet baseline_tpsf(const OptodeArray& optodes, const OpticalProperties& props,
                      const TimeAxis& time) {
  props.validate();
  TpsfSet out(optodes.n_sources(), optodes.n_detectors(), time.n_bins);
  for (int s = 0; s < out.n_sources; ++s) {
    for (int d = 0; d < out.n_detectors; ++d) {
      const double rho = (optodes.detectors[d] - optodes.sources[s]).norm();
      for (int j = 0; j < out.n_bins; ++j) out(s, d, j) = green2d(rho, time.bin_times[j], props);
    }
  }
  return out;
}

Eigen::VectorXd temporal_convolve(const Eigen::Ref<const Eigen::VectorXd>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b, double dt_ns) {
  if (a.size() != b.size()) throw_invalid("temporal_convolve: length mismatch");
  if (!(dt_ns > 0.0)) throw_invalid("temporal_convolve: dt must be positive");
  const Eigen::Index n = a.size();
  const Eigen::VectorXd b_rev = b.reverse();
  Eigen::VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // sum_{m<=j} a[m] b[j-m], with b[j-m] = b_rev[n-1-j+m]
    out[j] = dt_ns * a.head(j + 1).dot(b_rev.segment(n - 1 - j, j + 1));
  }
  return out;
}

JacobianLayout jacobian_layout(const OptodeArray& optodes, const Grid& grid, const Domain& domain,
                               const OpticalProperties& props, const TimeAxis& time) {
  JacobianLayout layout;
  layout.n_sources = static_cast<std::uint32_t>(optodes.n_sources());
  layout.n_detectors = static_cast<std::uint32_t>(optodes.n_detectors());
  layout.n_bins = static_cast<std::uint32_t>(time.n_bins);
  layout.n_pixels = static_cast<std::uint32_t>(grid.n_active());
  layout.dt_ns = time.dt_ns;
  layout.resolution_cm = grid.resolution_cm;
  layout.radius_cm = domain.radius_cm;
  layout.mu_a = props.mu_a;
  layout.mu_s_prime = props.mu_s_prime;
  layout.refractive_index = props.refractive_index;
  return layout;
}

namespace {

/// Per-bin integrals and midpoint samples of the Green's function at one distance.
struct GreenBins {
  Eigen::VectorXd integral;      // int_{m dt}^{(m+1) dt} G d tau
  Eigen::VectorXd midpoint;      // G((m + 1/2) dt)
  Eigen::VectorXd midpoint_rev;  // midpoint reversed
};

double exp_integral_e1(double x) { return -std::expint(-x); }

GreenBins green_bins(double rho, const OpticalProperties& props, int n_bins, double dt) {
  if (!(rho > 0.0)) throw_invalid("sensitivity: a pixel center coincides with an optode");
  const double dv = props.diffusion() * props.speed();
  const double a = rho * rho / (4.0 * dv);
  const double norm = 1.0 / (4.0 * std::numbers::pi * dv);
  const double decay = props.mu_a * props.speed();

  GreenBins bins;
  bins.integral.resize(n_bins);
  bins.midpoint.resize(n_bins);
  // int e^{-a/tau} / tau d tau = E1(a / tau); E1(a / 0) = 0.
  double e1_lo = 0.0;
  for (int m = 0; m < n_bins; ++m) {
    const double hi = (m + 1) * dt;
    const double mid = (m + 0.5) * dt;
    const double e1_hi = exp_integral_e1(a / hi);
    bins.integral[m] = norm * std::exp(-decay * mid) * (e1_hi - e1_lo);
    bins.midpoint[m] = green2d(rho, mid, props);
    e1_lo = e1_hi;
  }
  bins.midpoint_rev = bins.midpoint.reverse();
  return bins;
}

/// [G1 * G2](t_j) for t_j = (j + 1) dt by product integration; symmetric in (1, 2).
void convolve_bins(const GreenBins& g1, const GreenBins& g2, Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index n = out.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index h = (j + 1) / 2;  // bins entirely in the first half of [0, t_j]
    const Eigen::Index off = n - 1 - j;
    double acc = g1.integral.head(h).dot(g2.midpoint_rev.segment(off, h)) +
                 g2.integral.head(h).dot(g1.midpoint_rev.segment(off, h));
    if (j % 2 == 0) {
      const Eigen::Index m = j / 2;
      acc += 0.5 * (g1.integral[m] * g2.midpoint[m] + g2.integral[m] * g1.midpoint[m]);
    }
    out[j] = acc;
  }
}

}  // namespace

Eigen::VectorXd sensitivity_series(double rho_src_cm, double rho_det_cm,
                                   const OpticalProperties& props, const TimeAxis& time) {
  const GreenBins g1 = green_bins(rho_src_cm, props, time.n_bins, time.dt_ns);
  const GreenBins g2 = green_bins(rho_det_cm, props, time.n_bins, time.dt_ns);
  Eigen::VectorXd out(time.n_bins);
  convolve_bins(g1, g2, out);
  return -props.speed() * out;
}

SensitivityMatrix build_jacobian(const OptodeArray& optodes, const Grid& grid, const Domain& domain,
                                 const OpticalProperties& props, const TimeAxis& time,
                                 std::size_t max_bytes) {
  props.validate();
  SensitivityMatrix J;
  J.layout = jacobian_layout(optodes, grid, domain, props, time);
  const Eigen::Index rows = Eigen::Index(optodes.n_sources()) * optodes.n_detectors() * time.n_bins;
  const Eigen::Index cols = grid.n_active();
  const std::size_t required = std::size_t(rows) * std::size_t(cols) * sizeof(float);
  if (required > max_bytes) {
    throw Error(ErrorCode::InvalidArgument,
                "sensitivity matrix needs " + std::to_string(required) + " bytes, budget is " +
                    std::to_string(max_bytes));
  }
  J.entries.resize(rows, cols);

  const double scale = -props.speed() * grid.resolution_cm * grid.resolution_cm;
  std::vector<GreenBins> from_source(optodes.n_sources());
  std::vector<GreenBins> to_detector(optodes.n_detectors());
  Eigen::VectorXd series(time.n_bins);
  for (Eigen::Index i = 0; i < cols; ++i) {
    const Point2 r = grid.active_centers.col(i);
    for (int s = 0; s < optodes.n_sources(); ++s) {
      from_source[s] = green_bins((r - optodes.sources[s]).norm(), props, time.n_bins, time.dt_ns);
    }
    for (int d = 0; d < optodes.n_detectors(); ++d) {
      to_detector[d] = green_bins((r - optodes.detectors[d]).norm(), props, time.n_bins, time.dt_ns);
    }
    auto column = J.entries.col(i);
    for (int s = 0; s < optodes.n_sources(); ++s) {
      for (int d = 0; d < optodes.n_detectors(); ++d) {
        convolve_bins(from_source[s], to_detector[d], series);
        const Eigen::Index row0 = (Eigen::Index(s) * optodes.n_detectors() + d) * time.n_bins;
        column.segment(row0, time.n_bins) = (scale * series).cast<float>();
      }
    }
  }
  return J;
}

Eigen::VectorXd apply_jacobian(const SensitivityMatrix& J, const Eigen::Ref<const Eigen::VectorXd>& dmu) {
  if (dmu.size() != J.cols()) throw_invalid("apply_jacobian: field length does not match J");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(J.rows());
  for (Eigen::Index i = 0; i < J.cols(); ++i) {
    if (dmu[i] != 0.0) out.noalias() += dmu[i] * J.entries.col(i).cast<double>();
  }
  return out;
}

Eigen::VectorXd apply_jacobian_transpose(const SensitivityMatrix& J,
                                         const Eigen::Ref<const Eigen::VectorXd>& r) {
  if (r.size() != J.rows()) throw_invalid("apply_jacobian_transpose: residual length does not match J");
  Eigen::VectorXd out(J.cols());
  for (Eigen::Index i = 0; i < J.cols(); ++i) out[i] = J.entries.col(i).cast<double>().dot(r);
  return out;
}

TpsfSet born_forward(const SensitivityMatrix& J, const Eigen::Ref<const Eigen::VectorXd>& dmu,
                     const TpsfSet& baseline) {
  if (baseline.size() != J.rows()) throw_invalid("born_forward: baseline does not match J rows");
  TpsfSet out = baseline;
  out.values += apply_jacobian(J, dmu);
  return out;
}

TpsfSet apply_noise(const TpsfSet& clean, const NoiseModel& model) {
  if (!(model.target_level > 0.0)) throw_invalid("noise level must be positive");
  if ((clean.values.array() < 0.0).any() || !clean.values.allFinite()) {
    throw_invalid("apply_noise: TPSF values must be finite and non-negative");
  }
  std::mt19937_64 rng(model.seed);
  TpsfSet out = clean;
  for (int s = 0; s < clean.n_sources; ++s) {
    for (int d = 0; d < clean.n_detectors; ++d) {
      auto series = out.pair(s, d);
      const double total = series.sum();
      if (!(total > 0.0)) continue;
      const double peak_fraction = series.maxCoeff() / total;
      const double photons = 1.0 / (model.target_level * model.target_level * peak_fraction);
      double drawn_total = 0.0;
      for (Eigen::Index j = 0; j < series.size(); ++j) {
        const double mean = photons * series[j] / total;
        double counts = 0.0;
        if (mean > 0.0) counts = static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
        series[j] = counts;
        drawn_total += counts;
      }
      if (drawn_total > 0.0) series *= total / drawn_total;
    }
  }
  return out;
}

}  // namespace gsdot
