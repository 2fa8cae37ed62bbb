#pragma once

// Little-endian binary container helpers shared by the asset, condition and
// checkpoint files: a fixed magic string, then u64 / i64 / f64 fields.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flap::io {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  void magic(std::string_view m);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void str(std::string_view s);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  // `what` names the file kind in error messages.
  BinaryReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}
  void expect_magic(std::string_view m);
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string str();
  // Throws FormatError unless the stream is exhausted.
  void expect_end();

 private:
  void read_raw(void* dst, std::size_t n);
  std::istream& in_;
  std::string what_;
};

std::vector<char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

// "%.17g": shortest fixed-width form that round-trips every double.
std::string format_double(double v);

}  // namespace flap::io
