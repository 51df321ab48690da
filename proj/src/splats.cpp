#include "gsdot/splats.hpp"

#include <algorithm>
#include <cmath>

#include "gsdot/error.hpp"

namespace gsdot {

SplatParams::SplatParams(Eigen::VectorXd theta) : theta_(std::move(theta)) {
  if (theta_.size() % kParamsPerSplat != 0) {
    throw_invalid("splat parameter vector length must be a multiple of 6");
  }
}

double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  return angle - pi * std::ceil((angle - 0.5 * pi) / pi);
}

std::vector<Splatd> decode_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() % kParamsPerSplat != 0) {
    throw_invalid("splat parameter vector length must be a multiple of 6");
  }
  if (!theta.allFinite()) throw_invalid("splat parameters must be finite");
  std::vector<Splatd> splats(theta.size() / kParamsPerSplat);
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const auto p = theta.segment<kParamsPerSplat>(Eigen::Index(k) * kParamsPerSplat);
    splats[k].amplitude = std::exp(p[kLogAmplitude]);
    splats[k].center = Point2(p[kCenterX], p[kCenterY]);
    splats[k].scale_x = std::exp(p[kLogScaleX]);
    splats[k].scale_y = std::exp(p[kLogScaleY]);
    splats[k].angle = wrap_angle(p[kAngle]);
  }
  return splats;
}

Eigen::VectorXd encode_params(std::span<const Splatd> splats) {
  Eigen::VectorXd theta(Eigen::Index(splats.size()) * kParamsPerSplat);
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const Splatd& s = splats[k];
    if (!(s.amplitude > 0.0) || !(s.scale_x > 0.0) || !(s.scale_y > 0.0)) {
      throw_invalid("splat amplitude and scales must be positive");
    }
    auto p = theta.segment<kParamsPerSplat>(Eigen::Index(k) * kParamsPerSplat);
    p << std::log(s.amplitude), s.center.x(), s.center.y(), std::log(s.scale_x),
        std::log(s.scale_y), wrap_angle(s.angle);
  }
  return theta;
}

Eigen::Vector2d support_half_extent(const Splatd& splat, double n_sigma) {
  const double c = std::cos(splat.angle);
  const double s = std::sin(splat.angle);
  const double sx2 = splat.scale_x * splat.scale_x;
  const double sy2 = splat.scale_y * splat.scale_y;
  return n_sigma * Eigen::Vector2d(std::sqrt(sx2 * c * c + sy2 * s * s),
                                   std::sqrt(sx2 * s * s + sy2 * c * c));
}

std::vector<int> splat_support(const Splatd& splat, const Grid& grid, double n_sigma) {
  std::vector<int> support;
  if (!(n_sigma > 0.0)) throw_invalid("support width must be positive");
  const Eigen::Vector2d half = support_half_extent(splat, n_sigma);
  // Box edges in pixel units, widened by a hair so centers exactly on an
  // edge are kept despite rounding.
  constexpr double kEdgeSlack = 1e-9;
  const Eigen::Vector2d lo = (splat.center - half - grid.origin) / grid.resolution_cm - Eigen::Vector2d::Constant(kEdgeSlack);
  const Eigen::Vector2d hi = (splat.center + half - grid.origin) / grid.resolution_cm + Eigen::Vector2d::Constant(kEdgeSlack);
  const int ix0 = std::max(0, static_cast<int>(std::ceil(lo.x())));
  const int iy0 = std::max(0, static_cast<int>(std::ceil(lo.y())));
  const int ix1 = std::min(grid.width - 1, static_cast<int>(std::floor(hi.x())));
  const int iy1 = std::min(grid.height - 1, static_cast<int>(std::floor(hi.y())));
  for (int iy = iy0; iy <= iy1; ++iy) {
    for (int ix = ix0; ix <= ix1; ++ix) {
      const int active = grid.raster_to_active[std::size_t(iy) * grid.width + ix];
      if (active >= 0) support.push_back(active);
    }
  }
  return support;
}

SplatFieldEval rasterize(const SplatParams& params, const Grid& grid, double n_sigma) {
  const std::vector<Splatd> splats = decode_params(params.vector());
  SplatFieldEval eval;
  eval.field = Eigen::VectorXd::Zero(grid.n_active());
  eval.supports.reserve(splats.size());
  for (const Splatd& splat : splats) {
    std::vector<int> support = splat_support(splat, grid, n_sigma);
    for (int i : support) {
      eval.field[i] += evaluate_splat<double>(splat, grid.active_centers.col(i));
    }
    eval.supports.push_back(std::move(support));
  }
  return eval;
}

namespace {

/// Value and the six partials of one splat at one point.
Eigen::Matrix<double, kParamsPerSplat, 1> splat_partials(const Splatd& splat, const Point2& p) {
  const double c = std::cos(splat.angle);
  const double s = std::sin(splat.angle);
  const double dx = p.x() - splat.center.x();
  const double dy = p.y() - splat.center.y();
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  const double inv_sx2 = 1.0 / (splat.scale_x * splat.scale_x);
  const double inv_sy2 = 1.0 / (splat.scale_y * splat.scale_y);
  const double f = splat.amplitude * std::exp(-0.5 * (u * u * inv_sx2 + v * v * inv_sy2));

  Eigen::Matrix<double, kParamsPerSplat, 1> d;
  d[kLogAmplitude] = f;
  d[kCenterX] = f * (u * c * inv_sx2 - v * s * inv_sy2);
  d[kCenterY] = f * (u * s * inv_sx2 + v * c * inv_sy2);
  d[kLogScaleX] = f * u * u * inv_sx2;
  d[kLogScaleY] = f * v * v * inv_sy2;
  // du/dtheta = v, dv/dtheta = -u
  d[kAngle] = -f * u * v * (inv_sx2 - inv_sy2);
  return d;
}

}  // namespace

std::vector<SplatPartials> field_param_gradients(const SplatParams& params, const Grid& grid,
                                                 double n_sigma) {
  const std::vector<Splatd> splats = decode_params(params.vector());
  std::vector<SplatPartials> out(splats.size());
  for (std::size_t k = 0; k < splats.size(); ++k) {
    out[k].support = splat_support(splats[k], grid, n_sigma);
    out[k].d_field.resize(Eigen::Index(out[k].support.size()), kParamsPerSplat);
    for (std::size_t n = 0; n < out[k].support.size(); ++n) {
      out[k].d_field.row(Eigen::Index(n)) =
          splat_partials(splats[k], grid.active_centers.col(out[k].support[n])).transpose();
    }
  }
  return out;
}

Eigen::VectorXd pullback_field_gradient(const SplatParams& params, const Grid& grid,
                                        const Eigen::Ref<const Eigen::VectorXd>& pixel_grad,
                                        double n_sigma) {
  if (pixel_grad.size() != grid.n_active()) throw_invalid("pixel gradient length does not match grid");
  const std::vector<Splatd> splats = decode_params(params.vector());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.vector().size());
  for (std::size_t k = 0; k < splats.size(); ++k) {
    Eigen::Matrix<double, kParamsPerSplat, 1> acc = Eigen::Matrix<double, kParamsPerSplat, 1>::Zero();
    for (int i : splat_support(splats[k], grid, n_sigma)) {
      if (pixel_grad[i] != 0.0) acc += pixel_grad[i] * splat_partials(splats[k], grid.active_centers.col(i));
    }
    grad.segment<kParamsPerSplat>(Eigen::Index(k) * kParamsPerSplat) = acc;
  }
  return grad;
}

}  // namespace gsdot
