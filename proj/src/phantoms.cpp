#include "gsdot/phantoms.hpp"

#include <cmath>
#include <numbers>

#include "gsdot/error.hpp"

namespace gsdot {

std::string_view to_string(PhantomCase c) {
  switch (c) {
    case PhantomCase::OneInclusion: return "one-inclusion";
    case PhantomCase::ThreeCircles: return "three-circles";
    case PhantomCase::Crescent: return "crescent";
    case PhantomCase::Donut: return "donut";
  }
  return "unknown";
}

std::optional<PhantomCase> parse_phantom_case(std::string_view name) {
  for (PhantomCase c : kAllPhantomCases) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

PhantomSpec default_phantom(PhantomCase kind) {
  PhantomSpec spec;
  spec.kind = kind;
  spec.contrast = 0.02;
  switch (kind) {
    case PhantomCase::OneInclusion:
      spec.include = {{Point2(1.0, 0.5), 0.6}};
      break;
    case PhantomCase::ThreeCircles:
      for (int k = 0; k < 3; ++k) {
        const double angle = std::numbers::pi / 2 + k * 2.0 * std::numbers::pi / 3.0;
        spec.include.push_back({Point2(1.5 * std::cos(angle), 1.5 * std::sin(angle)), 0.5});
      }
      break;
    case PhantomCase::Crescent:
      spec.include = {{Point2(-0.8, 0.0), 1.0}};
      spec.exclude = {{Point2(-0.4, 0.0), 0.8}};
      break;
    case PhantomCase::Donut:
      spec.include = {{Point2(0.8, -0.6), 1.1}};
      spec.exclude = {{Point2(0.8, -0.6), 0.55}};
      break;
  }
  return spec;
}

int default_splat_count(PhantomCase kind) {
  switch (kind) {
    case PhantomCase::OneInclusion: return 1;
    case PhantomCase::ThreeCircles: return 3;
    case PhantomCase::Crescent: return 4;
    case PhantomCase::Donut: return 8;
  }
  return 1;
}

bool inside_phantom(const PhantomSpec& spec, const Point2& p) {
  bool inside = false;
  for (const Disc& disc : spec.include) inside = inside || (p - disc.center).norm() <= disc.radius;
  if (!inside) return false;
  for (const Disc& disc : spec.exclude) {
    if ((p - disc.center).norm() < disc.radius) return false;
  }
  return true;
}

Eigen::VectorXd make_phantom(const PhantomSpec& spec, const Grid& grid, const Domain& domain) {
  if (!(spec.contrast > 0.0)) throw_invalid("phantom contrast must be positive");
  if (spec.include.empty()) throw_invalid("phantom needs at least one shape");
  for (const Disc& disc : spec.include) {
    if (!(disc.radius > 0.0)) throw_invalid("phantom disc radius must be positive");
    if ((disc.center - domain.center).norm() + disc.radius > domain.radius_cm) {
      throw_invalid("phantom shape extends outside the domain");
    }
  }
  Eigen::VectorXd field(grid.n_active());
  for (int i = 0; i < grid.n_active(); ++i) {
    field[i] = inside_phantom(spec, grid.active_centers.col(i)) ? spec.contrast : 0.0;
  }
  return field;
}

}  // namespace gsdot
