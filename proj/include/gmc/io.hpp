#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gmc::io {

/// Shortest representation with 17 significant digits: round-trips exactly,
/// so replayed runs are byte-comparable.
std::string fmt17(double v);

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
void write_csv(const std::string& path, const Csv& csv);

/// Flat little-endian float64 dump.
void write_f64(const std::string& path, std::span<const double> values);
std::vector<double> read_f64(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace gmc::io
