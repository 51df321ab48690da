// Command-line driver: run the reconstruction pipeline, prebuild the
// Jacobian cache, or recompute metrics from a finished run.

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "gsdot/error.hpp"
#include "gsdot/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCache = 3;
constexpr int kExitDivergence = 4;

int exit_code_for(gsdot::ErrorCode code) {
  using gsdot::ErrorCode;
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return kExitConfig;
    case ErrorCode::CacheIo:
    case ErrorCode::CacheBadMagic:
    case ErrorCode::CacheTruncated:
    case ErrorCode::CacheChecksum:
    case ErrorCode::CacheMismatch:
      return kExitCache;
    case ErrorCode::Divergence:
    case ErrorCode::NonFiniteLoss:
      return kExitDivergence;
    default:
      return kExitOther;
  }
}

void print_metrics(const char* label, const gsdot::MetricsReport& m) {
  std::cout << std::setw(6) << label << "  rmse " << std::setprecision(4) << m.rmse << " cm^-1  ssim " << m.ssim
            << "  com " << m.com_error << " cm\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splat diffuse optical tomography reconstruction"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool dry_run = false;
  bool force_rebuild = false;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "phantom -> forward -> noise -> reconstruct -> metrics");
  run->add_option("config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "noise seed (overrides [noise] seed)");
  run->add_option("--out", out_dir, "output directory (overrides [output] directory)");
  run->add_flag("--dry-run", dry_run, "validate the config and print resolved parameters only");
  run->add_flag("--force-rebuild-jacobian", force_rebuild, "rebuild the Jacobian cache even if present");
  run->add_flag("-q,--quiet", quiet, "no progress output");

  auto* jac = app.add_subcommand("jacobian", "build the Jacobian cache only");
  jac->add_option("config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  jac->add_flag("--force-rebuild-jacobian", force_rebuild, "rebuild even if a valid cache exists");

  std::string metrics_dir;
  auto* met = app.add_subcommand("metrics", "recompute metrics.csv from the maps in an output directory");
  met->add_option("dir", metrics_dir, "pipeline output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      gsdot::RunOptions options;
      options.seed = seed;
      if (!out_dir.empty()) options.output_dir = out_dir;
      options.dry_run = dry_run;
      options.force_rebuild_jacobian = force_rebuild;
      options.quiet = quiet;
      const gsdot::RunManifest manifest = gsdot::run_pipeline(gsdot::load_config(config_path), options);
      if (dry_run) return kExitOk;
      print_metrics("clean", manifest.clean);
      if (manifest.noisy) print_metrics("noisy", *manifest.noisy);
      std::cout << "unknowns: " << manifest.compression.n_unknowns << " vs " << manifest.compression.n_pixels
                << " pixels (" << std::setprecision(5) << manifest.compression.ratio << "x)\n";
    } else if (*jac) {
      const auto path = gsdot::build_jacobian_cache(gsdot::load_config(config_path), force_rebuild);
      std::cout << path.string() << '\n';
    } else if (*met) {
      for (const auto& [condition, m] : gsdot::recompute_metrics(metrics_dir)) print_metrics(condition.c_str(), m);
    }
  } catch (const gsdot::DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (iteration " << e.iteration() << ")\n";
    return kExitDivergence;
  } catch (const gsdot::Error& e) {
    std::cerr << "error [" << gsdot::to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOk;
}
