#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gsdot/forward.hpp"
#include "gsdot/geometry.hpp"
#include "gsdot/inverse.hpp"
#include "gsdot/phantoms.hpp"

namespace gsdot {

struct GeometryConfig {
  double radius_cm = 3.0;
  double resolution_cm = 0.1;
  double margin_cm = 0.0;
  int n_sources = 10;
  int n_detectors = 10;
};

struct PhysicsConfig {
  OpticalProperties props;
  double t_total_ns = 6.0;
  double dt_ns = 0.02;
};

struct NoiseConfig {
  bool enabled = true;
  double level = 0.02;
  std::uint64_t seed = 1;
};

struct RunConfig {
  GeometryConfig geometry;
  PhysicsConfig physics;
  PhantomSpec phantom;
  NoiseConfig noise;
  HyperParams solver;
  std::filesystem::path output_dir = "gsdot-out";
  std::filesystem::path jacobian_cache;  // empty: derived from the geometry hash

  Domain domain() const { return Domain{geometry.radius_cm, Point2::Zero()}; }
};

/// Parses an INI-style config. Sections: [geometry] [physics] [phantom]
/// [noise] [solver] [output]. Unknown keys and malformed values throw
/// Error(ErrorCode::Config) naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Default configuration for a phantom case, with its default splat count.
RunConfig default_config(PhantomCase kind);

/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& config);

/// Hash of everything the Jacobian depends on.
std::uint64_t geometry_hash(const RunConfig& config);

/// Cache file location: explicit path if configured, else
/// <dir>/jacobian-<hash>.gsdj where dir is $GSDOT_CACHE_DIR or ".gsdot-cache".
/// The environment variable also replaces the directory of an explicit path.
std::filesystem::path resolve_cache_path(const RunConfig& config);

}  // namespace gsdot
