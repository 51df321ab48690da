#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gsdot/geometry.hpp"

namespace gsdot {

inline constexpr int kParamsPerSplat = 6;
inline constexpr double kDefaultSupportSigmas = 3.5;

/// Position of each unconstrained parameter inside a splat's block of the
/// flattened parameter vector.
enum ParamRole : int {
  kLogAmplitude = 0,
  kCenterX = 1,
  kCenterY = 2,
  kLogScaleX = 3,
  kLogScaleY = 4,
  kAngle = 5,
};

/// Decoded (physical) splat parameters.
template <typename Scalar>
struct Splat {
  Scalar amplitude;
  Eigen::Matrix<Scalar, 2, 1> center;
  Scalar scale_x;
  Scalar scale_y;
  Scalar angle;
};

using Splatd = Splat<double>;

/// Unconstrained parameter vector: per splat (log amplitude, x, y,
/// log scale x, log scale y, angle).
class SplatParams {
 public:
  SplatParams() = default;
  explicit SplatParams(Eigen::VectorXd theta);
  static SplatParams zeros(int n_splats) {
    return SplatParams(Eigen::VectorXd::Zero(Eigen::Index(n_splats) * kParamsPerSplat));
  }

  int count() const { return static_cast<int>(theta_.size() / kParamsPerSplat); }
  double operator()(int k, ParamRole role) const { return theta_[k * kParamsPerSplat + role]; }
  double& operator()(int k, ParamRole role) { return theta_[k * kParamsPerSplat + role]; }

  const Eigen::VectorXd& vector() const { return theta_; }
  Eigen::VectorXd& vector() { return theta_; }

 private:
  Eigen::VectorXd theta_;
};

/// Wraps an angle into (-pi/2, pi/2]; an unoriented ellipse has period pi.
double wrap_angle(double angle);

std::vector<Splatd> decode_params(const Eigen::Ref<const Eigen::VectorXd>& theta);
Eigen::VectorXd encode_params(std::span<const Splatd> splats);

/// Splat value at `p`, without truncation.
template <typename Scalar>
Scalar evaluate_splat(const Splat<Scalar>& splat, const Eigen::Matrix<Scalar, 2, 1>& p) {
  using std::cos;
  using std::exp;
  using std::sin;
  const Scalar c = cos(splat.angle);
  const Scalar s = sin(splat.angle);
  const Scalar dx = p.x() - splat.center.x();
  const Scalar dy = p.y() - splat.center.y();
  const Scalar u = c * dx + s * dy;
  const Scalar v = -s * dx + c * dy;
  const Scalar q = u * u / (splat.scale_x * splat.scale_x) + v * v / (splat.scale_y * splat.scale_y);
  return splat.amplitude * exp(Scalar(-0.5) * q);
}

/// Half extents of the axis-aligned box enclosing the n_sigma ellipse.
Eigen::Vector2d support_half_extent(const Splatd& splat, double n_sigma);

/// Active-pixel indices inside the bounding box of the n_sigma ellipse,
/// ascending.
std::vector<int> splat_support(const Splatd& splat, const Grid& grid,
                               double n_sigma = kDefaultSupportSigmas);

struct SplatFieldEval {
  Eigen::VectorXd field;                   // over active pixels
  std::vector<std::vector<int>> supports;  // per splat
};

SplatFieldEval rasterize(const SplatParams& params, const Grid& grid,
                         double n_sigma = kDefaultSupportSigmas);

/// Partial derivatives of one splat's contribution with respect to its six
/// unconstrained parameters, over its support.
struct SplatPartials {
  std::vector<int> support;
  Eigen::Matrix<double, Eigen::Dynamic, kParamsPerSplat> d_field;
};

std::vector<SplatPartials> field_param_gradients(const SplatParams& params, const Grid& grid,
                                                 double n_sigma = kDefaultSupportSigmas);

/// Chain rule through the field: sum_i pixel_grad[i] * d field_i / d theta.
/// `pixel_grad` is indexed by active pixel.
Eigen::VectorXd pullback_field_gradient(const SplatParams& params, const Grid& grid,
                                        const Eigen::Ref<const Eigen::VectorXd>& pixel_grad,
                                        double n_sigma = kDefaultSupportSigmas);

}  // namespace gsdot
