#include "vpctl/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vpctl::io {
namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return is;
}

// Shortest round-trip representation.
std::string fmt(double x) {
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  return std::string(buf.data(), p);
}

double parse_double(std::string_view s, const std::filesystem::path& path) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw FormatError("'" + path.string() + "': cannot parse number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) os.put(char((std::uint64_t(value) >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = is.get();
    if (c == EOF) throw FormatError("'" + path.string() + "': truncated checkpoint");
    v |= std::uint64_t(std::uint8_t(c)) << (8 * b);
  }
  return T(v);
}

void put_f64(std::ostream& os, double x) { put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is, const std::filesystem::path& path) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is, path));
}

void write_checkpoint(const std::filesystem::path& path, CheckpointKind kind, const std::vector<std::uint32_t>& shape,
                      const Vector<double>& values) {
  auto os = open_out(path, std::ios::out | std::ios::binary);
  os.write("VPCTL", 5);
  os.put(char(kCheckpointVersion));
  os.put(char(kind));
  put_le<std::uint32_t>(os, std::uint32_t(shape.size()));
  for (auto s : shape) put_le<std::uint32_t>(os, s);
  put_le<std::uint64_t>(os, std::uint64_t(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) put_f64(os, values(i));
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

void write_series_csv(const DiagnosticSeries& s, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "t,l2_perturbation,electric_energy,control_energy,mass\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << fmt(s.times[i]) << ',' << fmt(s.l2_perturbation[i]) << ',' << fmt(s.electric_energy[i]) << ','
       << fmt(s.control_energy[i]) << ',' << fmt(s.mass[i]) << '\n';
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

DiagnosticSeries read_series_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line != "t,l2_perturbation,electric_energy,control_energy,mass")
    throw FormatError("'" + path.string() + "': unexpected series header");
  DiagnosticSeries s;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw FormatError("'" + path.string() + "': expected 5 columns");
    s.push(parse_double(cells[0], path), parse_double(cells[1], path), parse_double(cells[2], path),
           parse_double(cells[3], path), parse_double(cells[4], path));
  }
  return s;
}

void write_matrix_snapshot(const Matrix<double>& m, const std::filesystem::path& stem) {
  {
    auto os = open_out(stem.string() + ".csv");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << fmt(m(r, c));
      os << '\n';
    }
  }
  const double lo = m.size() ? m.minCoeff() : 0.0;
  const double hi = m.size() ? m.maxCoeff() : 0.0;
  {
    auto os = open_out(stem.string() + ".pgm", std::ios::out | std::ios::binary);
    // Image: one pixel row per matrix column (second index increases upward),
    // one pixel column per matrix row.
    os << "P5\n" << m.rows() << ' ' << m.cols() << "\n255\n";
    for (Eigen::Index c = m.cols(); c-- > 0;)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double t = hi > lo ? (m(r, c) - lo) / (hi - lo) : 0.0;
        os.put(char(std::uint8_t(std::clamp(std::lround(t * 255.0), 0L, 255L))));
      }
  }
  auto os = open_out(stem.string() + ".scale.txt");
  os << fmt(lo) << ' ' << fmt(hi) << '\n';
}

Matrix<double> read_matrix_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (auto cell : split(line, ',')) row.push_back(parse_double(cell, path));
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError("'" + path.string() + "': ragged CSV");
    rows.push_back(std::move(row));
  }
  Matrix<double> m(Eigen::Index(rows.size()), rows.empty() ? 0 : Eigen::Index(rows.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  return m;
}

void write_field_snapshot(const DistributionField<double>& f, const std::filesystem::path& stem) {
  if (f.grid.dim() != 1) throw UsageError("write_field_snapshot: use write_velocity_slice for 2D distributions");
  write_matrix_snapshot(f.values, stem);
}

void write_field_snapshot(const SpatialField<double>& field, const std::filesystem::path& stem, int component) {
  if (component < 0 || component >= field.components()) throw UsageError("write_field_snapshot: bad component");
  if (field.grid.dim() == 1) {
    write_matrix_snapshot(field.values.col(component), stem);
    return;
  }
  const int n = field.grid.nx();
  write_matrix_snapshot(Eigen::Map<const Matrix<double>>(field.values.col(component).data(), n, n), stem);
}

void write_velocity_slice(const DistributionField<double>& f, int ix, int iy, const std::filesystem::path& stem) {
  if (f.grid.dim() != 2) throw UsageError("write_velocity_slice: 2D grid required");
  const int n = f.grid.nx(), m = f.grid.nv();
  if (ix < 0 || ix >= n || iy < 0 || iy >= n) throw UsageError("write_velocity_slice: node out of range");
  const Vector<double> row = f.values.row(ix + Eigen::Index(n) * iy).transpose();
  write_matrix_snapshot(Eigen::Map<const Matrix<double>>(row.data(), m, m), stem);
}

void checkpoint_write(const std::filesystem::path& path, const Vector<double>& theta) {
  write_checkpoint(path, CheckpointKind::time_independent, {std::uint32_t(theta.size())}, theta);
}

void checkpoint_write(const std::filesystem::path& path, const MlpParams<double>& params) {
  std::vector<std::uint32_t> shape(params.layer_dims.begin(), params.layer_dims.end());
  write_checkpoint(path, CheckpointKind::low_rank_operator, shape, params.flatten());
}

Checkpoint checkpoint_read(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::in | std::ios::binary);
  char magic[5] = {};
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "VPCTL", 5) != 0) throw FormatError("'" + path.string() + "': not a VPCTL checkpoint");
  const auto version = get_le<std::uint8_t>(is, path);
  if (version != kCheckpointVersion)
    throw FormatError("'" + path.string() + "': unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto kind = get_le<std::uint8_t>(is, path);
  const auto shape_count = get_le<std::uint32_t>(is, path);
  if (shape_count > 64) throw FormatError("'" + path.string() + "': implausible shape header");
  std::vector<std::uint32_t> shape(shape_count);
  for (auto& s : shape) s = get_le<std::uint32_t>(is, path);
  const auto count = get_le<std::uint64_t>(is, path);
  if (count > (1ull << 32)) throw FormatError("'" + path.string() + "': implausible value count");
  Vector<double> values(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = get_f64(is, path);

  if (kind == std::uint8_t(CheckpointKind::time_independent)) {
    if (shape.size() != 1 || shape[0] != count)
      throw FormatError("'" + path.string() + "': time_independent shape mismatch");
    return values;
  }
  if (kind == std::uint8_t(CheckpointKind::low_rank_operator)) {
    if (shape.size() < 2) throw FormatError("'" + path.string() + "': low_rank shape header too short");
    MlpParams<double> p(std::vector<int>(shape.begin(), shape.end()));
    if (Eigen::Index(count) != p.parameter_count())
      throw FormatError("'" + path.string() + "': parameter count does not match layer_dims");
    p.unflatten(values);
    return p;
  }
  throw FormatError("'" + path.string() + "': unknown controller kind " + std::to_string(kind));
}

Vector<double> checkpoint_read_theta(const std::filesystem::path& path) {
  auto c = checkpoint_read(path);
  if (auto* t = std::get_if<Vector<double>>(&c)) return std::move(*t);
  throw FormatError("'" + path.string() + "': shape mismatch, checkpoint holds a low_rank_operator controller");
}

MlpParams<double> checkpoint_read_mlp(const std::filesystem::path& path) {
  auto c = checkpoint_read(path);
  if (auto* p = std::get_if<MlpParams<double>>(&c)) return std::move(*p);
  throw FormatError("'" + path.string() + "': shape mismatch, checkpoint holds a time_independent controller");
}

}  // namespace vpctl::io
