#pragma once

#include <vector>

#include <Eigen/Core>

namespace gsdot {

using Point2 = Eigen::Vector2d;

struct Domain {
  double radius_cm = 3.0;
  Point2 center = Point2::Zero();
};

/// Square raster over the bounding box of a circular domain.
///
/// Pixels are numbered row-major with y increasing with the row index.
/// Only pixels whose centers lie within `radius - margin` of the domain
/// center are active; all per-pixel fields in the library are stored over
/// the active pixels, in `active_indices` order.
struct Grid {
  double resolution_cm = 0.1;
  int width = 0;
  int height = 0;
  Point2 origin = Point2::Zero();  // center of raster pixel 0
  std::vector<bool> active_mask;
  std::vector<int> active_indices;
  std::vector<int> raster_to_active;  // -1 for inactive pixels
  Eigen::Matrix2Xd active_centers;

  int n_pixels() const { return width * height; }
  int n_active() const { return static_cast<int>(active_indices.size()); }

  Point2 pixel_center(int raster_index) const {
    return origin + resolution_cm * Point2(raster_index % width, raster_index / width);
  }
  /// Raster index of the pixel containing `p`, or -1 when `p` is outside the raster.
  int nearest_pixel(const Point2& p) const;
};

Grid build_grid(const Domain& domain, double resolution_cm, double margin_cm = 0.0);

struct OptodeArray {
  std::vector<Point2> sources;
  std::vector<Point2> detectors;

  int n_sources() const { return static_cast<int>(sources.size()); }
  int n_detectors() const { return static_cast<int>(detectors.size()); }
};

/// Sources at angles 2*pi*k/n_src; detectors offset by half a detector step.
OptodeArray place_optodes(int n_src, int n_det, const Domain& domain);

/// Time samples at bin right edges, t_j = (j + 1) * dt.
struct TimeAxis {
  double t_total_ns = 6.0;
  double dt_ns = 0.02;
  int n_bins = 0;
  Eigen::VectorXd bin_times;
};

TimeAxis time_axis(double t_total_ns, double dt_ns);

}  // namespace gsdot
