#include "gsdot/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/program_options.hpp>

#include "gsdot/error.hpp"
#include "gsdot/io.hpp"

namespace po = boost::program_options;

namespace gsdot {

namespace {

std::vector<Disc> parse_discs(const std::string& text, const char* key) {
  std::vector<Disc> discs;
  std::istringstream items(text);
  std::string item;
  while (std::getline(items, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(item);
    double x = 0, y = 0, r = 0;
    char c1 = 0, c2 = 0;
    if (!(fields >> x >> c1 >> y >> c2 >> r) || c1 != ',' || c2 != ',' || !(fields >> std::ws).eof()) {
      throw Error(ErrorCode::Config, std::string("config key '") + key + "': expected 'x,y,r; ...', got '" + item + "'");
    }
    discs.push_back({Point2(x, y), r});
  }
  return discs;
}

std::string format_discs(const std::vector<Disc>& discs) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < discs.size(); ++i) {
    out << (i ? "; " : "") << discs[i].center.x() << ',' << discs[i].center.y() << ',' << discs[i].radius;
  }
  return out.str();
}

struct RawConfig {
  RunConfig config;
  std::string phantom_case;
  std::string include;
  std::string exclude;
  double contrast = 0.0;
  std::string output_dir;
  std::string jacobian_cache;
};

po::options_description describe(RawConfig& raw) {
  RunConfig& c = raw.config;
  HyperParams& s = c.solver;
  po::options_description desc;
  desc.add_options()
      ("geometry.radius_cm", po::value(&c.geometry.radius_cm)->default_value(c.geometry.radius_cm))
      ("geometry.resolution_cm", po::value(&c.geometry.resolution_cm)->default_value(c.geometry.resolution_cm))
      ("geometry.margin_cm", po::value(&c.geometry.margin_cm)->default_value(c.geometry.margin_cm))
      ("geometry.sources", po::value(&c.geometry.n_sources)->default_value(c.geometry.n_sources))
      ("geometry.detectors", po::value(&c.geometry.n_detectors)->default_value(c.geometry.n_detectors))
      ("physics.mu_a", po::value(&c.physics.props.mu_a)->default_value(c.physics.props.mu_a))
      ("physics.mu_s_prime", po::value(&c.physics.props.mu_s_prime)->default_value(c.physics.props.mu_s_prime))
      ("physics.refractive_index", po::value(&c.physics.props.refractive_index)->default_value(c.physics.props.refractive_index))
      ("physics.t_total_ns", po::value(&c.physics.t_total_ns)->default_value(c.physics.t_total_ns))
      ("physics.dt_ns", po::value(&c.physics.dt_ns)->default_value(c.physics.dt_ns))
      ("phantom.case", po::value(&raw.phantom_case)->required())
      ("phantom.contrast", po::value(&raw.contrast))
      ("phantom.include", po::value(&raw.include))
      ("phantom.exclude", po::value(&raw.exclude))
      ("noise.enabled", po::value(&c.noise.enabled)->default_value(c.noise.enabled))
      ("noise.level", po::value(&c.noise.level)->default_value(c.noise.level))
      ("noise.seed", po::value(&c.noise.seed)->default_value(c.noise.seed))
      ("solver.splats", po::value(&s.n_splats))
      ("solver.lambda_r", po::value(&s.lambda_r)->default_value(s.lambda_r))
      ("solver.beta", po::value(&s.beta)->default_value(s.beta))
      ("solver.lambda_p", po::value(&s.lambda_p)->default_value(s.lambda_p))
      ("solver.rho_p", po::value(&s.rho_p)->default_value(s.rho_p))
      ("solver.r_p", po::value(&s.r_p)->default_value(s.r_p))
      ("solver.eps_bp_rel", po::value(&s.eps_bp_rel)->default_value(s.eps_bp_rel))
      ("solver.alpha_init", po::value(&s.alpha_init)->default_value(s.alpha_init))
      ("solver.s_init", po::value(&s.s_init)->default_value(s.s_init))
      ("solver.suppression_radius_cm", po::value(&s.suppression_radius_cm)->default_value(s.suppression_radius_cm))
      ("solver.support_sigmas", po::value(&s.support_sigmas)->default_value(s.support_sigmas))
      ("solver.center_margin_cm", po::value(&s.center_margin_cm)->default_value(s.center_margin_cm))
      ("solver.iterations", po::value(&s.n_iters)->default_value(s.n_iters))
      ("solver.lr_log_amplitude", po::value(&s.lr.log_amplitude)->default_value(s.lr.log_amplitude))
      ("solver.lr_center", po::value(&s.lr.center)->default_value(s.lr.center))
      ("solver.lr_log_scale", po::value(&s.lr.log_scale)->default_value(s.lr.log_scale))
      ("solver.lr_angle", po::value(&s.lr.angle)->default_value(s.lr.angle))
      ("solver.adam_beta1", po::value(&s.adam_beta1)->default_value(s.adam_beta1))
      ("solver.adam_beta2", po::value(&s.adam_beta2)->default_value(s.adam_beta2))
      ("solver.adam_eps", po::value(&s.adam_eps)->default_value(s.adam_eps))
      ("output.directory", po::value(&raw.output_dir))
      ("output.jacobian_cache", po::value(&raw.jacobian_cache));
  return desc;
}

void validate(const RunConfig& c) {
  try {
    if (!(c.geometry.radius_cm > 0.0)) throw_invalid("geometry.radius_cm must be positive");
    if (!(c.geometry.resolution_cm > 0.0)) throw_invalid("geometry.resolution_cm must be positive");
    if (c.geometry.n_sources < 1 || c.geometry.n_detectors < 1) throw_invalid("geometry: optode counts must be >= 1");
    c.physics.props.validate();
    if (!(c.physics.dt_ns > 0.0) || c.physics.dt_ns > c.physics.t_total_ns) {
      throw_invalid("physics: need 0 < dt_ns <= t_total_ns");
    }
    if (c.noise.enabled && !(c.noise.level > 0.0)) throw_invalid("noise.level must be positive");
    if (!(c.phantom.contrast > 0.0)) throw_invalid("phantom.contrast must be positive");
    c.solver.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RawConfig raw;
  po::options_description desc = describe(raw);
  po::variables_map vm;
  try {
    std::istringstream in(text);
    po::store(po::parse_config_file(in, desc, /*allow_unregistered=*/false), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  }

  RunConfig config = raw.config;
  const auto kind = parse_phantom_case(raw.phantom_case);
  if (!kind) throw Error(ErrorCode::Config, "config key 'phantom.case': unknown case '" + raw.phantom_case + "'");
  config.phantom = default_phantom(*kind);
  if (vm.count("phantom.contrast")) config.phantom.contrast = raw.contrast;
  if (vm.count("phantom.include")) config.phantom.include = parse_discs(raw.include, "phantom.include");
  if (vm.count("phantom.exclude")) config.phantom.exclude = parse_discs(raw.exclude, "phantom.exclude");
  if (!vm.count("solver.splats")) config.solver.n_splats = default_splat_count(*kind);
  if (vm.count("output.directory")) config.output_dir = raw.output_dir;
  if (vm.count("output.jacobian_cache")) config.jacobian_cache = raw.jacobian_cache;
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

RunConfig default_config(PhantomCase kind) {
  RunConfig config;
  config.phantom = default_phantom(kind);
  config.solver.n_splats = default_splat_count(kind);
  return config;
}

std::string format_config(const RunConfig& c) {
  const HyperParams& s = c.solver;
  std::ostringstream out;
  out << std::setprecision(17) << std::boolalpha;
  out << "[geometry]\n"
      << "radius_cm = " << c.geometry.radius_cm << "\n"
      << "resolution_cm = " << c.geometry.resolution_cm << "\n"
      << "margin_cm = " << c.geometry.margin_cm << "\n"
      << "sources = " << c.geometry.n_sources << "\n"
      << "detectors = " << c.geometry.n_detectors << "\n\n"
      << "[physics]\n"
      << "mu_a = " << c.physics.props.mu_a << "\n"
      << "mu_s_prime = " << c.physics.props.mu_s_prime << "\n"
      << "refractive_index = " << c.physics.props.refractive_index << "\n"
      << "t_total_ns = " << c.physics.t_total_ns << "\n"
      << "dt_ns = " << c.physics.dt_ns << "\n\n"
      << "[phantom]\n"
      << "case = " << to_string(c.phantom.kind) << "\n"
      << "contrast = " << c.phantom.contrast << "\n"
      << "include = " << format_discs(c.phantom.include) << "\n";
  if (!c.phantom.exclude.empty()) out << "exclude = " << format_discs(c.phantom.exclude) << "\n";
  out << "\n[noise]\n"
      << "enabled = " << (c.noise.enabled ? "true" : "false") << "\n"
      << "level = " << c.noise.level << "\n"
      << "seed = " << c.noise.seed << "\n\n"
      << "[solver]\n"
      << "splats = " << s.n_splats << "\n"
      << "lambda_r = " << s.lambda_r << "\n"
      << "beta = " << s.beta << "\n"
      << "lambda_p = " << s.lambda_p << "\n"
      << "rho_p = " << s.rho_p << "\n"
      << "r_p = " << s.r_p << "\n"
      << "eps_bp_rel = " << s.eps_bp_rel << "\n"
      << "alpha_init = " << s.alpha_init << "\n"
      << "s_init = " << s.s_init << "\n"
      << "suppression_radius_cm = " << s.suppression_radius_cm << "\n"
      << "support_sigmas = " << s.support_sigmas << "\n"
      << "center_margin_cm = " << s.center_margin_cm << "\n"
      << "iterations = " << s.n_iters << "\n"
      << "lr_log_amplitude = " << s.lr.log_amplitude << "\n"
      << "lr_center = " << s.lr.center << "\n"
      << "lr_log_scale = " << s.lr.log_scale << "\n"
      << "lr_angle = " << s.lr.angle << "\n"
      << "adam_beta1 = " << s.adam_beta1 << "\n"
      << "adam_beta2 = " << s.adam_beta2 << "\n"
      << "adam_eps = " << s.adam_eps << "\n\n"
      << "[output]\n"
      << "directory = " << c.output_dir.string() << "\n";
  if (!c.jacobian_cache.empty()) out << "jacobian_cache = " << c.jacobian_cache.string() << "\n";
  return out.str();
}

std::uint64_t geometry_hash(const RunConfig& c) {
  const double values[] = {c.geometry.radius_cm,        c.geometry.resolution_cm, c.geometry.margin_cm,
                           double(c.geometry.n_sources), double(c.geometry.n_detectors),
                           c.physics.props.mu_a,        c.physics.props.mu_s_prime,
                           c.physics.props.refractive_index, c.physics.t_total_ns, c.physics.dt_ns};
  return fnv1a64(std::as_bytes(std::span(values)));
}

std::filesystem::path resolve_cache_path(const RunConfig& config) {
  const char* env = std::getenv("GSDOT_CACHE_DIR");
  const std::filesystem::path env_dir = env && *env ? std::filesystem::path(env) : std::filesystem::path();
  if (!config.jacobian_cache.empty()) {
    return env_dir.empty() ? config.jacobian_cache : env_dir / config.jacobian_cache.filename();
  }
  const std::filesystem::path dir = env_dir.empty() ? std::filesystem::path(".gsdot-cache") : env_dir;
  return dir / ("jacobian-" + hex64(geometry_hash(config)) + ".gsdj");
}

}  // namespace gsdot
