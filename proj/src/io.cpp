#include "gsdot/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gsdot/error.hpp"
#include "gsdot/metrics.hpp"

namespace gsdot {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t hash) {
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buffer{};
  while (in) {
    in.read(buffer.data(), buffer.size());
    hash = fnv1a64(std::as_bytes(std::span(buffer.data(), std::size_t(in.gcount()))), hash);
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 5> kMagic = {'G', 'S', 'D', 'J', '1'};
constexpr std::size_t kHeaderBytes = kMagic.size() + 4 * sizeof(std::uint32_t) + 6 * sizeof(double);

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(const std::vector<char>& buf, std::size_t& pos) {
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void save_jacobian(const SensitivityMatrix& J, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::CacheIo, "cannot write Jacobian cache " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    const JacobianLayout& h = J.layout;
    put(out, h.n_sources);
    put(out, h.n_detectors);
    put(out, h.n_bins);
    put(out, h.n_pixels);
    for (double v : {h.dt_ns, h.resolution_cm, h.radius_cm, h.mu_a, h.mu_s_prime, h.refractive_index}) put(out, v);

    // Body is row-major; entries are stored column-major in memory.
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    std::vector<float> row(std::size_t(J.cols()));
    for (Eigen::Index r = 0; r < J.rows(); ++r) {
      for (Eigen::Index c = 0; c < J.cols(); ++c) row[std::size_t(c)] = J.entries(r, c);
      const auto bytes = std::as_bytes(std::span(row));
      hash = fnv1a64(bytes, hash);
      out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    put(out, hash);
    if (!out) throw Error(ErrorCode::CacheIo, "failed writing Jacobian cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string first_layout_mismatch(const JacobianLayout& found, const JacobianLayout& expected) {
  if (found.n_sources != expected.n_sources) return "n_sources";
  if (found.n_detectors != expected.n_detectors) return "n_detectors";
  if (found.n_bins != expected.n_bins) return "n_bins";
  if (found.n_pixels != expected.n_pixels) return "n_pixels";
  if (found.dt_ns != expected.dt_ns) return "dt";
  if (found.resolution_cm != expected.resolution_cm) return "resolution";
  if (found.radius_cm != expected.radius_cm) return "radius";
  if (found.mu_a != expected.mu_a) return "mu_a";
  if (found.mu_s_prime != expected.mu_s_prime) return "mu_s_prime";
  if (found.refractive_index != expected.refractive_index) return "refractive_index";
  return {};
}

SensitivityMatrix load_jacobian(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::CacheIo, "cannot open Jacobian cache " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  if (size < std::streamsize(kMagic.size())) {
    throw Error(ErrorCode::CacheTruncated, "Jacobian cache is truncated: " + path.string());
  }
  std::array<char, 5> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kMagic) throw Error(ErrorCode::CacheBadMagic, "not a Jacobian cache (bad magic): " + path.string());
  if (size < std::streamsize(kHeaderBytes)) {
    throw Error(ErrorCode::CacheTruncated, "Jacobian cache header is truncated: " + path.string());
  }
  std::vector<char> header(kHeaderBytes - kMagic.size());
  in.read(header.data(), std::streamsize(header.size()));
  std::size_t pos = 0;
  SensitivityMatrix J;
  JacobianLayout& h = J.layout;
  h.n_sources = take<std::uint32_t>(header, pos);
  h.n_detectors = take<std::uint32_t>(header, pos);
  h.n_bins = take<std::uint32_t>(header, pos);
  h.n_pixels = take<std::uint32_t>(header, pos);
  h.dt_ns = take<double>(header, pos);
  h.resolution_cm = take<double>(header, pos);
  h.radius_cm = take<double>(header, pos);
  h.mu_a = take<double>(header, pos);
  h.mu_s_prime = take<double>(header, pos);
  h.refractive_index = take<double>(header, pos);

  const std::uint64_t rows = std::uint64_t(h.n_sources) * h.n_detectors * h.n_bins;
  const std::uint64_t cols = h.n_pixels;
  const std::uint64_t body_bytes = rows * cols * sizeof(float);
  if (std::uint64_t(size) != kHeaderBytes + body_bytes + sizeof(std::uint64_t)) {
    throw Error(ErrorCode::CacheTruncated, "Jacobian cache size does not match its header: " + path.string());
  }

  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> body(rows, cols);
  in.read(reinterpret_cast<char*>(body.data()), std::streamsize(body_bytes));
  std::uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (!in) throw Error(ErrorCode::CacheTruncated, "Jacobian cache is truncated: " + path.string());
  const auto bytes = std::as_bytes(std::span(body.data(), std::size_t(body.size())));
  if (fnv1a64(bytes) != stored) throw Error(ErrorCode::CacheChecksum, "Jacobian cache checksum mismatch: " + path.string());
  J.entries = body;
  return J;
}

SensitivityMatrix load_jacobian(const std::filesystem::path& path, const JacobianLayout& expected) {
  SensitivityMatrix J = load_jacobian(path);
  const std::string field = first_layout_mismatch(J.layout, expected);
  if (!field.empty()) {
    throw Error(ErrorCode::CacheMismatch, "Jacobian cache header field '" + field +
                                              "' does not match the configuration: " + path.string());
  }
  return J;
}

// ---------------------------------------------------------------------------

namespace {

std::ofstream open_text(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_map_csv(const std::filesystem::path& path, const Grid& grid,
                   const Eigen::Ref<const Eigen::VectorXd>& field) {
  if (field.size() != grid.n_active()) throw_invalid("write_map_csv: field does not match grid");
  std::ofstream out = open_text(path);
  out << "x_cm,y_cm,value\n";
  for (int i = 0; i < grid.n_active(); ++i) {
    out << grid.active_centers(0, i) << ',' << grid.active_centers(1, i) << ',' << field[i] << '\n';
  }
}

void write_raster_csv(const std::filesystem::path& path, const Grid& grid,
                      const Eigen::Ref<const Eigen::VectorXd>& field) {
  const Eigen::MatrixXd image = to_image(grid, field);
  std::ofstream out = open_text(path);
  for (Eigen::Index r = image.rows() - 1; r >= 0; --r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) out << (c ? "," : "") << image(r, c);
    out << '\n';
  }
}

Eigen::VectorXd read_map_csv(const std::filesystem::path& path, const Grid& grid) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  Eigen::VectorXd field = Eigen::VectorXd::Zero(grid.n_active());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double x = 0, y = 0, v = 0;
    char comma = 0;
    if (!(row >> x >> comma >> y >> comma >> v)) throw Error(ErrorCode::Io, "malformed map row in " + path.string());
    const int pixel = grid.nearest_pixel(Point2(x, y));
    const int active = pixel < 0 ? -1 : grid.raster_to_active[std::size_t(pixel)];
    if (active < 0) throw Error(ErrorCode::Io, "map row outside the active grid in " + path.string());
    field[active] = v;
  }
  return field;
}

void write_splats_csv(const std::filesystem::path& path, std::span<const Splatd> splats) {
  std::ofstream out = open_text(path);
  out << "k,alpha,x,y,sx,sy,theta_deg\n";
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const Splatd& s = splats[k];
    out << k << ',' << s.amplitude << ',' << s.center.x() << ',' << s.center.y() << ',' << s.scale_x << ','
        << s.scale_y << ',' << s.angle * 180.0 / std::numbers::pi << '\n';
  }
}

std::uint8_t gray_level(double value, double lo, double hi) {
  const double scaled = std::floor((value - lo) / (hi - lo) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

void export_pgm(const std::filesystem::path& path, const Grid& grid,
                const Eigen::Ref<const Eigen::VectorXd>& field, double lo, double hi) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw_invalid("export_pgm: empty value range");
  if (!field.allFinite()) throw_invalid("export_pgm: non-finite field");
  if (field.size() != grid.n_active()) throw_invalid("export_pgm: field does not match grid");
  std::vector<std::uint8_t> pixels(std::size_t(grid.n_pixels()), 0);
  for (int i = 0; i < grid.n_active(); ++i) {
    const int idx = grid.active_indices[i];
    const int row_from_top = grid.height - 1 - idx / grid.width;
    pixels[std::size_t(row_from_top) * grid.width + idx % grid.width] = gray_level(field[i], lo, hi);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  std::ostringstream head;
  head << std::setprecision(9) << "P5\n# range " << lo << ' ' << hi << "\n" << grid.width << ' ' << grid.height
       << "\n255\n";
  out << head.str();
  out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  PgmImage image;
  std::string magic;
  in >> magic;
  if (magic != "P5") throw Error(ErrorCode::Io, "not a binary PGM: " + path.string());
  auto next_token = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      if (image.comment.empty()) image.comment = comment.substr(1);
      in >> std::ws;
    }
    int value = 0;
    in >> value;
    return value;
  };
  image.width = next_token();
  image.height = next_token();
  const int maxval = next_token();
  if (maxval != 255 || image.width <= 0 || image.height <= 0) throw Error(ErrorCode::Io, "unsupported PGM: " + path.string());
  in.get();
  image.pixels.resize(std::size_t(image.width) * image.height);
  in.read(reinterpret_cast<char*>(image.pixels.data()), std::streamsize(image.pixels.size()));
  if (!in) throw Error(ErrorCode::Io, "truncated PGM: " + path.string());
  return image;
}

}  // namespace gsdot
