#pragma once

// Shared fixtures: a coarse geometry that keeps Jacobian builds well under a second.

#include <filesystem>
#include <random>
#include <string>

#include <gsdot/forward.hpp>
#include <gsdot/geometry.hpp>

namespace gsdot::test {

struct SmallProblem {
  Domain domain;
  Grid grid;
  OptodeArray optodes;
  TimeAxis time;
  OpticalProperties props;
  SensitivityMatrix J;
  TpsfSet baseline;

  explicit SmallProblem(double resolution = 0.2, int n_opt = 6, double t_total = 3.0, double dt = 0.05)
      : grid(build_grid(domain, resolution)),
        optodes(place_optodes(n_opt, n_opt, domain)),
        time(time_axis(t_total, dt)),
        J(build_jacobian(optodes, grid, domain, props, time)),
        baseline(baseline_tpsf(optodes, props, time)) {}
};

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gsdot-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

}  // namespace gsdot::test
