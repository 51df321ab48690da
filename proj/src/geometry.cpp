#include "gsdot/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gsdot/error.hpp"

namespace gsdot {

int Grid::nearest_pixel(const Point2& p) const {
  const Point2 rel = (p - origin) / resolution_cm;
  const long ix = std::lround(rel.x());
  const long iy = std::lround(rel.y());
  if (ix < 0 || iy < 0 || ix >= width || iy >= height) return -1;
  return static_cast<int>(iy * width + ix);
}

Grid build_grid(const Domain& domain, double resolution_cm, double margin_cm) {
  if (!(resolution_cm > 0.0) || !std::isfinite(resolution_cm)) {
    throw_invalid("grid resolution must be positive, got " + std::to_string(resolution_cm));
  }
  if (!(domain.radius_cm > 0.0)) throw_invalid("domain radius must be positive");
  if (margin_cm < 0.0 || margin_cm >= domain.radius_cm) {
    throw_invalid("active-pixel margin must lie in [0, R)");
  }
  const double cells = 2.0 * domain.radius_cm / resolution_cm;
  const int n = static_cast<int>(std::lround(cells));
  if (n < 2) throw_invalid("resolution must split the domain diameter into at least 2 pixels");

  Grid grid;
  grid.resolution_cm = resolution_cm;
  grid.width = n;
  grid.height = n;
  const double half = 0.5 * (n - 1) * resolution_cm;
  grid.origin = domain.center - Point2(half, half);
  grid.active_mask.assign(std::size_t(n) * n, false);
  grid.raster_to_active.assign(std::size_t(n) * n, -1);

  const double limit = domain.radius_cm - margin_cm;
  for (int idx = 0; idx < grid.n_pixels(); ++idx) {
    // Compare in pixel units so the mask is exactly symmetric about the center.
    const double ux = (idx % n) - 0.5 * (n - 1);
    const double uy = (idx / n) - 0.5 * (n - 1);
    if (std::hypot(ux, uy) * resolution_cm <= limit) {
      grid.active_mask[idx] = true;
      grid.raster_to_active[idx] = grid.n_active();
      grid.active_indices.push_back(idx);
    }
  }
  grid.active_centers.resize(2, grid.n_active());
  for (int i = 0; i < grid.n_active(); ++i) {
    grid.active_centers.col(i) = grid.pixel_center(grid.active_indices[i]);
  }
  return grid;
}

OptodeArray place_optodes(int n_src, int n_det, const Domain& domain) {
  if (n_src < 1 || n_det < 1) throw_invalid("optode counts must be at least 1");
  auto on_circle = [&](double angle) {
    return Point2(domain.center.x() + domain.radius_cm * std::cos(angle),
                  domain.center.y() + domain.radius_cm * std::sin(angle));
  };
  OptodeArray optodes;
  const double src_step = 2.0 * std::numbers::pi / n_src;
  const double det_step = 2.0 * std::numbers::pi / n_det;
  for (int k = 0; k < n_src; ++k) optodes.sources.push_back(on_circle(k * src_step));
  for (int k = 0; k < n_det; ++k) optodes.detectors.push_back(on_circle((k + 0.5) * det_step));
  return optodes;
}

TimeAxis time_axis(double t_total_ns, double dt_ns) {
  if (!(dt_ns > 0.0) || !std::isfinite(t_total_ns)) throw_invalid("time step must be positive");
  if (dt_ns > t_total_ns) throw_invalid("time step exceeds the time window");
  TimeAxis axis;
  axis.t_total_ns = t_total_ns;
  axis.dt_ns = dt_ns;
  axis.n_bins = static_cast<int>(std::lround(t_total_ns / dt_ns));
  axis.bin_times.resize(axis.n_bins);
  for (int j = 0; j < axis.n_bins; ++j) axis.bin_times[j] = (j + 1) * dt_ns;
  return axis;
}

}  // namespace gsdot
