#include "gmc/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace gmc::io {

std::string fmt17(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;  // shortest round-trip wins
  }
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void write_csv(const std::string& path, const Csv& csv) {
  std::ofstream f = open_out(path);
  const auto line = [&f](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) f << ',';
      f << cells[i];
    }
    f << '\n';
  };
  line(csv.header);
  for (const auto& row : csv.rows) line(row);
  finish(f, path);
}

void write_f64(const std::string& path, std::span<const double> values) {
  std::ofstream f = open_out(path);
  for (const double v : values) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(u >> (8 * i));
    f.write(b, sizeof b);
  }
  finish(f, path);
}

std::vector<double> read_f64(const std::string& path) {
  const std::string data = read_text(path);
  if (data.size() % 8 != 0)
    throw std::runtime_error("truncated float64 file: " + path);
  std::vector<double> out(data.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i)
      u |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[8 * k + i]))
           << (8 * i);
    std::memcpy(&out[k], &u, sizeof u);
  }
  return out;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f = open_out(path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  finish(f, path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw std::runtime_error("read failed: " + path);
  return out;
}

}  // namespace gmc::io
