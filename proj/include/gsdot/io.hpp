#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gsdot/forward.hpp"
#include "gsdot/geometry.hpp"
#include "gsdot/splats.hpp"

namespace gsdot {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

// ---------------------------------------------------------------------------
// Jacobian cache
//
// Little-endian binary: magic "GSDJ1"; u32 N_s, N_d, N_t, N_g; f64 dt,
// resolution, R, mu_a, mu_s', n; row-major f32 body; u64 FNV-1a of the body.

void save_jacobian(const SensitivityMatrix& J, const std::filesystem::path& path);

/// Reads and verifies a cache file. Throws Error with CacheBadMagic,
/// CacheTruncated, CacheChecksum or CacheIo.
SensitivityMatrix load_jacobian(const std::filesystem::path& path);

/// As above, and additionally rejects a header that differs from `expected`
/// with CacheMismatch naming the first differing field.
SensitivityMatrix load_jacobian(const std::filesystem::path& path, const JacobianLayout& expected);

/// Name of the first field where the layouts differ, or empty when equal.
std::string first_layout_mismatch(const JacobianLayout& found, const JacobianLayout& expected);

// ---------------------------------------------------------------------------
// Maps and tables

/// (x_cm, y_cm, value) per active pixel.
void write_map_csv(const std::filesystem::path& path, const Grid& grid,
                   const Eigen::Ref<const Eigen::VectorXd>& field);
/// Full raster, one CSV row per raster row, top row = largest y.
void write_raster_csv(const std::filesystem::path& path, const Grid& grid,
                      const Eigen::Ref<const Eigen::VectorXd>& field);
/// Reads a map written by write_map_csv back onto the active pixels of `grid`.
Eigen::VectorXd read_map_csv(const std::filesystem::path& path, const Grid& grid);

void write_splats_csv(const std::filesystem::path& path, std::span<const Splatd> splats);

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, top row first
  std::string comment;
};

/// Linear map of [lo, hi] to 0..255 with floor rounding and clamping;
/// inactive pixels are 0. Top row of the file is the largest y.
void export_pgm(const std::filesystem::path& path, const Grid& grid,
                const Eigen::Ref<const Eigen::VectorXd>& field, double lo, double hi);
PgmImage read_pgm(const std::filesystem::path& path);
std::uint8_t gray_level(double value, double lo, double hi);

}  // namespace gsdot
