#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace fleetcast::csv {

/// Line-oriented reader for the plain comma-separated files used here
/// (no quoting, no embedded commas). Tracks 1-based line numbers for diagnostics.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  /// Reads the header and checks it against `expected` (exact column names, in order).
  void expect_header(const std::vector<std::string>& expected);

  /// Next non-empty record; false at end of file.
  bool next(std::vector<std::string_view>& fields);

  std::size_t line() const { return line_no_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

std::vector<std::string_view> split(std::string_view line, char sep = ',');

// Field conversions; throw ParseError tagged with `line`.
double to_double(std::string_view field, std::size_t line);
std::int64_t to_int(std::string_view field, std::size_t line);

/// Shortest decimal text that round-trips the exact double.
std::string format_double(double v);

}  // namespace fleetcast::csv
