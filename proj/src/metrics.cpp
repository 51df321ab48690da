#include "gsdot/metrics.hpp"

#include <cmath>

#include "gsdot/error.hpp"

namespace gsdot {

Eigen::MatrixXd to_image(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& field, double fill) {
  if (field.size() != grid.n_active()) throw_invalid("to_image: field does not match grid");
  Eigen::MatrixXd image = Eigen::MatrixXd::Constant(grid.height, grid.width, fill);
  for (int i = 0; i < grid.n_active(); ++i) {
    const int idx = grid.active_indices[i];
    image(idx / grid.width, idx % grid.width) = field[i];
  }
  return image;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& recon, const Eigen::Ref<const Eigen::VectorXd>& gt) {
  if (recon.size() != gt.size()) throw_invalid("rmse: length mismatch");
  if (recon.size() == 0) throw_invalid("rmse: empty fields");
  return std::sqrt((recon - gt).squaredNorm() / static_cast<double>(recon.size()));
}

double ssim(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
            const SsimOptions& options) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw_invalid("ssim: image shapes differ");
  const int w = options.window;
  if (w < 1 || w % 2 == 0) throw_invalid("ssim: window size must be odd and positive");
  if (w > x.rows() || w > x.cols()) throw_invalid("ssim: window larger than image");

  double range = options.data_range;
  if (!(range > 0.0)) range = y.maxCoeff() - y.minCoeff();
  if (!(range > 0.0)) range = 1.0;
  const double c1 = (options.k1 * range) * (options.k1 * range);
  const double c2 = (options.k2 * range) * (options.k2 * range);
  const double n = double(w) * w;

  double total = 0.0;
  const Eigen::Index rows = x.rows() - w + 1;
  const Eigen::Index cols = x.cols() - w + 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto bx = x.block(r, c, w, w);
      const auto by = y.block(r, c, w, w);
      const double mx = bx.sum() / n;
      const double my = by.sum() / n;
      const double vx = bx.cwiseAbs2().sum() / n - mx * mx;
      const double vy = by.cwiseAbs2().sum() / n - my * my;
      const double cxy = bx.cwiseProduct(by).sum() / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / double(rows * cols);
}

Point2 center_of_mass(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& field) {
  if (field.size() != grid.n_active()) throw_invalid("center_of_mass: field does not match grid");
  const double mass = field.sum();
  if (!(mass > 0.0)) throw Error(ErrorCode::UndefinedCenterOfMass, "center of mass undefined: field has no positive mass");
  return grid.active_centers * field / mass;
}

double com_error(const Eigen::Ref<const Eigen::VectorXd>& recon, const Eigen::Ref<const Eigen::VectorXd>& gt,
                 const Grid& grid) {
  return (center_of_mass(grid, recon) - center_of_mass(grid, gt)).norm();
}

Eigen::VectorXd line_profile(const Grid& grid, const Eigen::Ref<const Eigen::MatrixXd>& image,
                             const Point2& through, Axis axis) {
  if (image.rows() != grid.height || image.cols() != grid.width) throw_invalid("line_profile: image does not match grid");
  const int pixel = grid.nearest_pixel(through);
  if (pixel < 0) throw_invalid("line_profile: point lies outside the grid");
  if (axis == Axis::X) return image.row(pixel / grid.width).transpose();
  return image.col(pixel % grid.width);
}

MetricsReport evaluate_metrics(const Grid& grid, const Eigen::Ref<const Eigen::VectorXd>& recon,
                               const Eigen::Ref<const Eigen::VectorXd>& gt, double background) {
  if (!std::isfinite(background)) throw_invalid("evaluate_metrics: background must be finite");
  MetricsReport report;
  report.rmse = rmse(recon, gt);
  const Eigen::VectorXd recon_abs = recon.array() + background;
  const Eigen::VectorXd gt_abs = gt.array() + background;
  report.ssim = ssim(to_image(grid, recon_abs), to_image(grid, gt_abs));
  report.com_error = com_error(recon, gt, grid);
  return report;
}

}  // namespace gsdot
