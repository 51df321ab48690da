#include "gsdot/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gsdot/error.hpp"
#include "gsdot/io.hpp"

namespace gsdot {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossBreakdown>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(17) << "iteration,L_total,L_data,L_reg,L_rep\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i << ',' << trace[i].total << ',' << trace[i].data << ',' << trace[i].reg << ',' << trace[i].rep << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::string_view case_name,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(17) << "case,condition,rmse,ssim,com_error\n";
  for (const auto& [condition, m] : rows) {
    out << case_name << ',' << condition << ',' << m.rmse << ',' << m.ssim << ',' << m.com_error << '\n';
  }
}

void write_profile(const std::filesystem::path& path, const Grid& grid, Axis axis, const Point2& through,
                   const std::vector<std::pair<std::string, Eigen::VectorXd>>& fields) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(17) << "position_cm";
  std::vector<Eigen::VectorXd> profiles;
  for (const auto& [name, field] : fields) {
    out << ',' << name;
    profiles.push_back(line_profile(grid, to_image(grid, field), through, axis));
  }
  out << '\n';
  const int n = axis == Axis::X ? grid.width : grid.height;
  for (int i = 0; i < n; ++i) {
    const double pos = axis == Axis::X ? grid.origin.x() + i * grid.resolution_cm
                                       : grid.origin.y() + i * grid.resolution_cm;
    out << pos;
    for (const auto& p : profiles) out << ',' << p[i];
    out << '\n';
  }
}

}  // namespace

Setup make_setup(const RunConfig& config) {
  Setup setup;
  setup.domain = config.domain();
  setup.grid = build_grid(setup.domain, config.geometry.resolution_cm, config.geometry.margin_cm);
  setup.optodes = place_optodes(config.geometry.n_sources, config.geometry.n_detectors, setup.domain);
  setup.time = time_axis(config.physics.t_total_ns, config.physics.dt_ns);
  setup.props = config.physics.props;
  return setup;
}

SensitivityMatrix obtain_jacobian(const RunConfig& config, const Setup& setup, bool force_rebuild,
                                  bool* from_cache) {
  const std::filesystem::path path = resolve_cache_path(config);
  const JacobianLayout expected =
      jacobian_layout(setup.optodes, setup.grid, setup.domain, setup.props, setup.time);
  if (from_cache) *from_cache = false;
  if (!force_rebuild && std::filesystem::exists(path)) {
    SensitivityMatrix J = load_jacobian(path, expected);
    if (from_cache) *from_cache = true;
    return J;
  }
  SensitivityMatrix J = build_jacobian(setup.optodes, setup.grid, setup.domain, setup.props, setup.time);
  save_jacobian(J, path);
  return J;
}

std::filesystem::path build_jacobian_cache(const RunConfig& config, bool force_rebuild) {
  const Setup setup = make_setup(config);
  obtain_jacobian(config, setup, force_rebuild);
  return resolve_cache_path(config);
}

std::string resolved_summary(const RunConfig& config) {
  const Setup setup = make_setup(config);
  std::ostringstream out;
  out << format_config(config) << "\n# resolved\n"
      << "# active pixels: " << setup.grid.n_active() << " (" << setup.grid.width << "x" << setup.grid.height
      << " raster)\n"
      << "# time bins: " << setup.time.n_bins << "\n"
      << "# jacobian: " << setup.optodes.n_sources() * setup.optodes.n_detectors() * setup.time.n_bins << " x "
      << setup.grid.n_active() << ", cache " << resolve_cache_path(config).string() << "\n";
  const CompressionReport c = compression(config.solver.n_splats, setup.grid.n_active());
  out << "# unknowns: " << c.n_unknowns << " splat parameters vs " << c.n_pixels << " pixels (ratio "
      << std::setprecision(6) << c.ratio << ")\n";
  return out.str();
}

RunManifest run_pipeline(RunConfig config, const RunOptions& options) {
  if (options.seed) config.noise.seed = *options.seed;
  if (options.output_dir) config.output_dir = *options.output_dir;
  const std::string config_text = format_config(config);

  // The hash identifies the experiment, not where its outputs or cache live.
  RunConfig hashed = config;
  hashed.output_dir.clear();
  hashed.jacobian_cache.clear();
  const std::string hashed_text = format_config(hashed);
  RunManifest manifest;
  manifest.config_hash = hex64(fnv1a64(std::as_bytes(std::span(hashed_text.data(), hashed_text.size()))));
  if (options.dry_run) {
    if (!options.quiet) std::cout << resolved_summary(config);
    return manifest;
  }
  auto log = [&](const std::string& msg) {
    if (!options.quiet) std::cerr << "[gsdot] " << msg << '\n';
  };

  auto t0 = Clock::now();
  const Setup setup = make_setup(config);
  SensitivityMatrix J = obtain_jacobian(config, setup, options.force_rebuild_jacobian, &manifest.jacobian_from_cache);
  manifest.stage_seconds["jacobian"] = seconds_since(t0);
  log(std::string("jacobian ") + (manifest.jacobian_from_cache ? "loaded" : "built") + " in " +
      std::to_string(manifest.stage_seconds["jacobian"]) + " s");

  t0 = Clock::now();
  auto gram = std::make_shared<const Eigen::MatrixXd>(gram_matrix(J));
  manifest.stage_seconds["gram"] = seconds_since(t0);

  t0 = Clock::now();
  const TpsfSet baseline = baseline_tpsf(setup.optodes, setup.props, setup.time);
  const Eigen::VectorXd gt = make_phantom(config.phantom, setup.grid, setup.domain);
  TpsfSet clean = born_forward(J, gt, baseline);
  // The linearized prediction can dip a hair below zero on the leading edge.
  clean.values = clean.values.cwiseMax(0.0);
  manifest.stage_seconds["forward"] = seconds_since(t0);

  t0 = Clock::now();
  const InverseProblem clean_problem{J, clean, baseline, setup.grid, setup.domain, setup.props.mu_a};
  const NormalEquationsMisfit clean_misfit(gram, J, clean, baseline);
  const ReconstructionResult clean_result = reconstruct(clean_problem, clean_misfit, config.solver);
  manifest.stage_seconds["reconstruct_clean"] = seconds_since(t0);
  manifest.clean = evaluate_metrics(setup.grid, clean_result.delta_mu_a, gt, config.physics.props.mu_a);
  log("clean reconstruction: rmse " + std::to_string(manifest.clean.rmse) + ", ssim " +
      std::to_string(manifest.clean.ssim) + ", com " + std::to_string(manifest.clean.com_error));

  std::optional<ReconstructionResult> noisy_result;
  if (config.noise.enabled) {
    t0 = Clock::now();
    const TpsfSet noisy = apply_noise(clean, NoiseModel{config.noise.level, config.noise.seed});
    const InverseProblem noisy_problem{J, noisy, baseline, setup.grid, setup.domain, setup.props.mu_a};
    const NormalEquationsMisfit noisy_misfit(gram, J, noisy, baseline);
    noisy_result = reconstruct(noisy_problem, noisy_misfit, config.solver);
    manifest.stage_seconds["reconstruct_noisy"] = seconds_since(t0);
    manifest.noisy = evaluate_metrics(setup.grid, noisy_result->delta_mu_a, gt, config.physics.props.mu_a);
    log("noisy reconstruction: rmse " + std::to_string(manifest.noisy->rmse) + ", ssim " +
        std::to_string(manifest.noisy->ssim) + ", com " + std::to_string(manifest.noisy->com_error));
  }
  manifest.compression = compression(config.solver.n_splats, setup.grid.n_active());

  // Exports
  t0 = Clock::now();
  const std::filesystem::path dir = config.output_dir;
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name) {
    written.push_back(name);
    return dir / name;
  };
  {
    std::ofstream out(emit("config.ini"), std::ios::trunc);
    out << config_text;
  }
  std::vector<std::pair<std::string, Eigen::VectorXd>> maps = {{"gt", gt}, {"clean", clean_result.delta_mu_a}};
  if (noisy_result) maps.emplace_back("noisy", noisy_result->delta_mu_a);
  double hi = 0.0;
  for (const auto& [name, field] : maps) hi = std::max(hi, field.maxCoeff());
  if (!(hi > 0.0)) hi = config.phantom.contrast;
  for (const auto& [name, field] : maps) {
    const std::string stem = name == "gt" ? "gt_map" : "recon_" + name + "_map";
    write_map_csv(emit(stem + ".csv"), setup.grid, field);
    write_raster_csv(emit(stem + "_raster.csv"), setup.grid, field);
    export_pgm(emit(stem + ".pgm"), setup.grid, field, 0.0, hi);
  }
  const Point2 through = center_of_mass(setup.grid, gt);
  write_profile(emit("profile_x.csv"), setup.grid, Axis::X, through, maps);
  write_profile(emit("profile_y.csv"), setup.grid, Axis::Y, through, maps);

  std::vector<std::pair<std::string, MetricsReport>> metric_rows = {{"clean", manifest.clean}};
  if (manifest.noisy) metric_rows.emplace_back("noisy", *manifest.noisy);
  write_metrics_csv(emit("metrics.csv"), to_string(config.phantom.kind), metric_rows);

  write_loss_trace(emit("loss_trace.csv"), clean_result.trace);
  write_splats_csv(emit("splats_final.csv"), decode_params(clean_result.params.vector()));
  if (noisy_result) {
    write_loss_trace(emit("loss_trace_noisy.csv"), noisy_result->trace);
    write_splats_csv(emit("splats_final_noisy.csv"), decode_params(noisy_result->params.vector()));
  }
  manifest.stage_seconds["export"] = seconds_since(t0);

  for (const std::string& name : written) manifest.files.push_back({name, hex64(fnv1a64_file(dir / name))});

  nlohmann::ordered_json j;
  j["config_hash"] = manifest.config_hash;
  j["code_version"] = manifest.code_version;
  j["jacobian_cache"] = resolve_cache_path(config).string();
  j["jacobian_from_cache"] = manifest.jacobian_from_cache;
  j["stage_seconds"] = manifest.stage_seconds;
  j["unknowns"] = {{"splats", manifest.compression.n_splats},
                   {"splat_parameters", manifest.compression.n_unknowns},
                   {"pixels", manifest.compression.n_pixels},
                   {"compression_ratio", manifest.compression.ratio}};
  auto metrics_json = [](const MetricsReport& m) {
    return nlohmann::ordered_json{{"rmse", m.rmse}, {"ssim", m.ssim}, {"com_error", m.com_error}};
  };
  j["metrics"]["clean"] = metrics_json(manifest.clean);
  if (manifest.noisy) j["metrics"]["noisy"] = metrics_json(*manifest.noisy);
  j["best_iteration"]["clean"] = clean_result.best_iteration;
  if (noisy_result) j["best_iteration"]["noisy"] = noisy_result->best_iteration;
  for (const ManifestEntry& e : manifest.files) j["files"].push_back({{"file", e.file}, {"fnv1a64", e.fnv1a64}});
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest");
  out << j.dump(2) << '\n';
  return manifest;
}

std::vector<std::pair<std::string, MetricsReport>> recompute_metrics(const std::filesystem::path& dir) {
  const RunConfig config = load_config(dir / "config.ini");
  const Setup setup = make_setup(config);
  const Eigen::VectorXd gt = read_map_csv(dir / "gt_map.csv", setup.grid);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const char* condition : {"clean", "noisy"}) {
    const std::filesystem::path map = dir / (std::string("recon_") + condition + "_map.csv");
    if (!std::filesystem::exists(map)) continue;
    rows.emplace_back(condition, evaluate_metrics(setup.grid, read_map_csv(map, setup.grid), gt, config.physics.props.mu_a));
  }
  if (rows.empty()) throw Error(ErrorCode::Io, "no reconstruction maps found in " + dir.string());
  write_metrics_csv(dir / "metrics.csv", to_string(config.phantom.kind), rows);
  return rows;
}

}  // namespace gsdot
