#include "flap/binary_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "flap/error.hpp"

namespace flap::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void BinaryWriter::magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

void BinaryWriter::u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::i64(std::int64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::f64(double v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::f64s(std::span<const double> v) {
  out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(what_ + ": truncated file");
}

void BinaryReader::expect_magic(std::string_view m) {
  std::string got(m.size(), '\0');
  read_raw(got.data(), got.size());
  if (got != m) throw FormatError(what_ + ": bad magic, expected \"" + std::string(m) + "\"");
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read_raw(&v, sizeof v);
  return v;
}

std::int64_t BinaryReader::i64() {
  std::int64_t v;
  read_raw(&v, sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  read_raw(&v, sizeof v);
  return v;
}

std::vector<double> BinaryReader::f64s(std::size_t n) {
  if (n > (std::size_t{1} << 34)) throw FormatError(what_ + ": implausible array length");
  std::vector<double> v(n);
  read_raw(v.data(), n * sizeof(double));
  return v;
}

std::string BinaryReader::str() {
  const auto n = u64();
  if (n > (std::uint64_t{1} << 24)) throw FormatError(what_ + ": implausible string length");
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) throw FormatError(what_ + ": trailing bytes");
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) { write_file_bytes(path, text); }

std::string format_double(double v) {
  // JSON readers take "-0" as the integer zero and drop the sign.
  if (v == 0.0 && std::signbit(v)) return "-0.0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace flap::io
