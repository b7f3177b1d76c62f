#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "jumpcalc/engine.hpp"

namespace jumpcalc::io {

/// Path CSV: header then one row per sample,
///   t,x...,M...,qvar...,event_flag
/// (coordinate-suffixed column names when dimension > 1). All numbers are
/// shortest round-trip decimals, so parsing the file back reproduces the
/// stored doubles bit-exactly.
std::string path_to_csv(const Path& path);
void write_path_csv(const Path& path, const std::string& filename);

/// Parses a CSV produced by path_to_csv back into (t, state, M, qvar,
/// flag) rows.
struct ParsedPathCsv {
  int dimension = 1;
  std::vector<double> t;
  std::vector<std::uint8_t> flag;
  std::vector<double> state;       // rows x dimension
  std::vector<double> martingale;  // rows x dimension
  std::vector<double> qvar;        // rows x dimension
};
ParsedPathCsv parse_path_csv(const std::string& csv);

/// Compact binary companion of a path CSV: magic, layout version, spec
/// fingerprint, seed/path_index, dimension, terminal reason, the resolved
/// SimConfig and the row/event counts. Fixed little-endian layout.
struct BinaryManifest {
  std::uint64_t spec_fingerprint = 0;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  std::uint32_t dimension = 1;
  std::uint8_t terminal = 0;
  SimConfig config;
  std::uint64_t n_rows = 0;
  std::uint64_t n_events = 0;
};

BinaryManifest manifest_of(const Path& path);
void write_binary_manifest(const BinaryManifest& m, const std::string& filename);
BinaryManifest read_binary_manifest(const std::string& filename);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace jumpcalc::io
