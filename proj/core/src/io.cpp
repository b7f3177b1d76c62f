#include "jumpcalc/io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace jumpcalc::io {

std::string format_double(double v) {
  std::array<char, 40> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc())
    throw std::runtime_error("format_double: to_chars failed");
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("parse_double: bad number '" + s + "'");
  return v;
}

std::string path_to_csv(const Path& path) {
  const int d = path.dimension;
  const bool with_integrals = path.drift_integral.size() == path.state.size();
  std::ostringstream out;
  // header: scalar names for d == 1, coordinate-suffixed otherwise
  out << "t";
  auto col = [&](const char* base, int j) {
    out << ',' << base;
    if (d > 1) out << j;
  };
  for (int j = 0; j < d; ++j) col("x", j);
  for (int j = 0; j < d; ++j) col("M", j);
  for (int j = 0; j < d; ++j) col("qvar", j);
  out << ",event_flag\n";

  for (std::size_t i = 0; i < path.rows(); ++i) {
    out << format_double(path.t[i]);
    for (int j = 0; j < d; ++j)
      out << ',' << format_double(path.state[i * d + j]);
    for (int j = 0; j < d; ++j) {
      const double m = with_integrals
                           ? path.state[i * d + j] - path.x0[j] -
                                 path.drift_integral[i * d + j]
                           : 0.0;
      out << ',' << format_double(m);
    }
    for (int j = 0; j < d; ++j)
      out << ','
          << format_double(with_integrals ? path.qvar_integral[i * d + j]
                                          : 0.0);
    out << ',' << static_cast<int>(path.flag[i]) << '\n';
  }
  return out.str();
}

void write_path_csv(const Path& path, const std::string& filename) {
  std::ofstream f(filename, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + filename);
  f << path_to_csv(path);
}

ParsedPathCsv parse_path_csv(const std::string& csv) {
  ParsedPathCsv out;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  // infer dimension from the header: t, d*x, d*M, d*qvar, event_flag
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(
                                line.begin(), line.end(), ','));
  if (columns < 5 || (columns - 2) % 3 != 0)
    throw std::runtime_error("unrecognized path CSV header");
  const int d = static_cast<int>((columns - 2) / 3);
  out.dimension = d;

  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    cells.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != columns)
      throw std::runtime_error("ragged path CSV row");
    std::size_t c = 0;
    out.t.push_back(parse_double(cells[c++]));
    for (int j = 0; j < d; ++j) out.state.push_back(parse_double(cells[c++]));
    for (int j = 0; j < d; ++j)
      out.martingale.push_back(parse_double(cells[c++]));
    for (int j = 0; j < d; ++j) out.qvar.push_back(parse_double(cells[c++]));
    out.flag.push_back(static_cast<std::uint8_t>(std::stoi(cells[c++])));
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'J', 'C', 'P', 'M'};
constexpr std::uint32_t kLayoutVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size())
    throw std::runtime_error("binary manifest truncated");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

BinaryManifest manifest_of(const Path& path) {
  BinaryManifest m;
  m.spec_fingerprint = path.spec_fingerprint;
  m.seed = path.config.seed;
  m.path_index = path.config.path_index;
  m.dimension = static_cast<std::uint32_t>(path.dimension);
  m.terminal = static_cast<std::uint8_t>(path.terminal);
  m.config = path.config;
  m.n_rows = path.rows();
  m.n_events = path.events.size();
  return m;
}

void write_binary_manifest(const BinaryManifest& m,
                           const std::string& filename) {
  std::string buf;
  buf.append(kMagic, 4);
  put(buf, kLayoutVersion);
  put(buf, m.spec_fingerprint);
  put(buf, m.seed);
  put(buf, m.path_index);
  put(buf, m.dimension);
  put(buf, m.terminal);
  put(buf, m.config.horizon);
  put(buf, m.config.dt_grid);
  put(buf, m.config.ode_step);
  put(buf, m.config.hazard_tol);
  put(buf, m.config.q_max);
  put(buf, m.config.x_max);
  put(buf, m.n_rows);
  put(buf, m.n_events);
  std::ofstream f(filename, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + filename);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

BinaryManifest read_binary_manifest(const std::string& filename) {
  std::ifstream f(filename, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + filename);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("not a jumpcalc binary manifest");
  std::size_t off = 4;
  const auto version = get<std::uint32_t>(buf, off);
  if (version != kLayoutVersion)
    throw std::runtime_error("unsupported binary manifest version");
  BinaryManifest m;
  m.spec_fingerprint = get<std::uint64_t>(buf, off);
  m.seed = get<std::uint64_t>(buf, off);
  m.path_index = get<std::uint64_t>(buf, off);
  m.dimension = get<std::uint32_t>(buf, off);
  m.terminal = get<std::uint8_t>(buf, off);
  m.config.seed = m.seed;
  m.config.path_index = m.path_index;
  m.config.horizon = get<double>(buf, off);
  m.config.dt_grid = get<double>(buf, off);
  m.config.ode_step = get<double>(buf, off);
  m.config.hazard_tol = get<double>(buf, off);
  m.config.q_max = get<double>(buf, off);
  m.config.x_max = get<double>(buf, off);
  m.n_rows = get<std::uint64_t>(buf, off);
  m.n_events = get<std::uint64_t>(buf, off);
  return m;
}

}  // namespace jumpcalc::io
