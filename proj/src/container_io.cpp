#include "specden/container_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "specden/errors.hpp"

namespace specden {

namespace {

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

constexpr char kMagic[4] = {'S', 'I', 'C', '1'};
constexpr std::uint32_t kMaxDim = 1u << 20;

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64(std::string& buf, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

} // namespace

void save_container(const SpectrumImage& cube, const std::filesystem::path& path) {
  cube.validate_shape();
  if (cube.rows > kMaxDim || cube.cols > kMaxDim || cube.axis.n_channels > kMaxDim) {
    throw ValueError("save_container: dimension exceeds container limit");
  }
  std::string header;
  header.append(kMagic, 4);
  put_u32(header, static_cast<std::uint32_t>(cube.rows));
  put_u32(header, static_cast<std::uint32_t>(cube.cols));
  put_u32(header, static_cast<std::uint32_t>(cube.axis.n_channels));
  put_f64(header, cube.axis.offset_kev);
  put_f64(header, cube.axis.dispersion_kev);
  put_u32(header, static_cast<std::uint32_t>(cube.provenance.size()));
  header += cube.provenance;

  std::ofstream out = open_out(path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string payload;
  payload.reserve(cube.counts.size() * 8);
  for (double v : cube.counts) put_f64(payload, v);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

SpectrumImage load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());

  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  const std::size_t size = data.size();
  constexpr std::size_t kFixedHeader = 4 + 3 * 4 + 2 * 8 + 4;
  if (size < kFixedHeader) throw FormatError("container too short for header: " + path.string());
  if (std::memcmp(p, kMagic, 4) != 0) throw FormatError("magic mismatch: " + path.string());

  SpectrumImage cube;
  const std::uint32_t rows = get_u32(p + 4);
  const std::uint32_t cols = get_u32(p + 8);
  const std::uint32_t n_channels = get_u32(p + 12);
  cube.axis.offset_kev = get_f64(p + 16);
  cube.axis.dispersion_kev = get_f64(p + 24);
  const std::uint32_t prov_len = get_u32(p + 32);

  if (rows == 0 || cols == 0 || n_channels == 0 || rows > kMaxDim || cols > kMaxDim ||
      n_channels > kMaxDim) {
    throw FormatError("corrupt header: implausible dimensions in " + path.string());
  }
  if (size < kFixedHeader + prov_len) {
    throw FormatError("corrupt header: provenance overruns file in " + path.string());
  }
  cube.provenance.assign(data, kFixedHeader, prov_len);

  const std::uint64_t n_values =
      static_cast<std::uint64_t>(rows) * cols * n_channels;
  const std::uint64_t expected = kFixedHeader + prov_len + n_values * 8;
  if (size != expected) {
    throw FormatError("corrupt header: declared sizes inconsistent with payload length in " +
                      path.string());
  }

  cube.rows = rows;
  cube.cols = cols;
  cube.axis.n_channels = n_channels;
  cube.axis.validate();
  cube.counts.resize(n_values);
  const unsigned char* v = p + kFixedHeader + prov_len;
  for (std::uint64_t i = 0; i < n_values; ++i) cube.counts[i] = get_f64(v + 8 * i);
  return cube;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_spectrum_csv(const Vector& spectrum, const EnergyAxis& axis,
                        const std::filesystem::path& path) {
  if (spectrum.size() != axis.n_channels) {
    throw DimensionError("write_spectrum_csv: spectrum length does not match axis");
  }
  std::ofstream out = open_out(path);
  out << "energy_kev,counts\n";
  for (Index i = 0; i < spectrum.size(); ++i) {
    out << format_double(axis.energy_of(i)) << ',' << format_double(spectrum(i)) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_map_csv(const Matrix& map, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (Index c = 0; c < map.cols(); ++c) {
    if (c) out << ',';
    out << 'c' << c;
  }
  out << '\n';
  for (Index r = 0; r < map.rows(); ++r) {
    for (Index c = 0; c < map.cols(); ++c) {
      if (c) out << ',';
      out << format_double(map(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_series_csv(const std::vector<std::pair<double, double>>& series,
                      const std::string& header, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << header << '\n';
  for (const auto& [x, y] : series) {
    out << format_double(x) << ',' << format_double(y) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_map_pgm(const Matrix& map, const std::filesystem::path& path) {
  if (map.size() == 0) throw ValueError("write_map_pgm: empty map");
  const double lo = map.minCoeff();
  const double hi = map.maxCoeff();
  const double span = hi - lo;
  std::ofstream out = open_out(path);
  out << "P5\n" << map.cols() << ' ' << map.rows() << "\n65535\n";
  std::string payload;
  payload.reserve(static_cast<std::size_t>(map.size()) * 2);
  for (Index r = 0; r < map.rows(); ++r) {
    for (Index c = 0; c < map.cols(); ++c) {
      double scaled = span > 0.0 ? (map(r, c) - lo) / span : 0.0;
      const auto q = static_cast<std::uint32_t>(std::lround(scaled * 65535.0));
      payload.push_back(static_cast<char>((q >> 8) & 0xff)); // MSB first per PGM
      payload.push_back(static_cast<char>(q & 0xff));
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());

  std::ofstream side = open_out(path.string() + ".scale.txt");
  side << "min=" << format_double(lo) << "\nmax=" << format_double(hi) << "\nmaxval=65535\n";
  if (!side) throw IoError("write failed: " + path.string() + ".scale.txt");
}

} // namespace specden
