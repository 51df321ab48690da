#pragma once

#include <Eigen/Core>

#include "gsdot/geometry.hpp"

namespace gsdot {

/// Active-pixel field scattered onto the full raster; inactive pixels get `fill`.
/// Row r of the image is raster row r (increasing y).
Eigen::MatrixXd to_image(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& field,
                         double fill = 0.0);

double rmse(const Eigen::Ref<const Eigen::VectorXd>& recon, const Eigen::Ref<const Eigen::VectorXd>& gt);

struct SsimOptions {
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  /// Dynamic range L; a non-positive value means "use the range of the second image".
  double data_range = 0.0;
};

/// Mean local SSIM over every fully contained window position, with uniform
/// weights and population statistics.
double ssim(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
            const SsimOptions& options = {});

Point2 center_of_mass(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& field);

/// |CoM(recon) - CoM(gt)|.
double com_error(const Eigen::Ref<const Eigen::VectorXd>& recon, const Eigen::Ref<const Eigen::VectorXd>& gt,
                 const Grid& grid);

enum class Axis { X, Y };

/// Raster row (Axis::X) or column (Axis::Y) through `through`.
Eigen::VectorXd line_profile(const Grid& grid, const Eigen::Ref<const Eigen::MatrixXd>& image,
                             const Point2& through, Axis axis);

struct MetricsReport {
  double rmse = 0.0;
  double ssim = 0.0;
  double com_error = 0.0;
};

/// All three metrics for a perturbation map against ground truth. RMSE and CoM
/// use the perturbations; SSIM compares absolute maps (background added on
/// active pixels, zero outside) with L taken from the ground-truth image.
MetricsReport evaluate_metrics(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& recon,
                               const Eigen::Ref<const Eigen::VectorXd>& gt, double background);

}  // namespace gsdot
