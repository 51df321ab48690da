#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gsdot/geometry.hpp"

namespace gsdot {

enum class PhantomCase { OneInclusion, ThreeCircles, Crescent, Donut };

std::string_view to_string(PhantomCase c);
std::optional<PhantomCase> parse_phantom_case(std::string_view name);
inline constexpr PhantomCase kAllPhantomCases[] = {PhantomCase::OneInclusion, PhantomCase::ThreeCircles,
                                                   PhantomCase::Crescent, PhantomCase::Donut};

struct Disc {
  Point2 center;
  double radius;
};

/// Binary inclusion: union of `include` discs minus union of `exclude` discs.
struct PhantomSpec {
  PhantomCase kind = PhantomCase::OneInclusion;
  std::vector<Disc> include;
  std::vector<Disc> exclude;
  double contrast = 0.02;  // cm^-1 above background
};

PhantomSpec default_phantom(PhantomCase kind);

/// Default number of splats used to reconstruct each case.
int default_splat_count(PhantomCase kind);

bool inside_phantom(const PhantomSpec& spec, const Point2& p);

/// Ground-truth delta mu_a over the active pixels.
Eigen::VectorXd make_phantom(const PhantomSpec& spec, const Grid& grid, const Domain& domain);

}  // namespace gsdot
