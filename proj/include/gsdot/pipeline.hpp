#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsdot/config.hpp"
#include "gsdot/metrics.hpp"

namespace gsdot {

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides [noise] seed
  std::optional<std::filesystem::path> output_dir;
  bool dry_run = false;
  bool force_rebuild_jacobian = false;
  bool quiet = false;
};

struct ManifestEntry {
  std::string file;
  std::string fnv1a64;
};

struct RunManifest {
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::map<std::string, double> stage_seconds;
  std::vector<ManifestEntry> files;
  CompressionReport compression;
  MetricsReport clean;
  std::optional<MetricsReport> noisy;
  bool jacobian_from_cache = false;
};

/// Everything the forward stage needs, built from a config.
struct Setup {
  Domain domain;
  Grid grid;
  OptodeArray optodes;
  TimeAxis time;
  OpticalProperties props;
};

Setup make_setup(const RunConfig& config);

/// Loads the cached Jacobian when its header matches, otherwise builds and
/// stores it. A mismatching explicit cache is rebuilt only with `force_rebuild`.
SensitivityMatrix obtain_jacobian(const RunConfig& config, const Setup& setup, bool force_rebuild,
                                  bool* from_cache = nullptr);

/// phantom -> forward -> noise -> reconstruct -> metrics -> exports.
RunManifest run_pipeline(RunConfig config, const RunOptions& options);

/// Builds (or verifies) the Jacobian cache only.
std::filesystem::path build_jacobian_cache(const RunConfig& config, bool force_rebuild);

/// Recomputes metrics.csv from the maps and manifest in an output directory.
std::vector<std::pair<std::string, MetricsReport>> recompute_metrics(const std::filesystem::path& dir);

std::string resolved_summary(const RunConfig& config);

}  // namespace gsdot
