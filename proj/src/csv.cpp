#include "fleetcast/csv.hpp"

#include <charconv>
#include <cmath>

#include "fleetcast/error.hpp"

namespace fleetcast::csv {

Reader::Reader(const std::filesystem::path& path) : path_(path), in_(path) {
  if (!in_) throw ParseError("cannot open " + path.string());
}

void Reader::expect_header(const std::vector<std::string>& expected) {
  std::vector<std::string_view> fields;
  if (!next(fields)) throw ParseError(path_.string() + ": missing header", 1);
  bool ok = fields.size() == expected.size();
  for (std::size_t i = 0; ok && i < fields.size(); ++i) ok = fields[i] == expected[i];
  if (!ok) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw ParseError(path_.string() + ": expected header '" + want + "'", line_no_);
  }
}

bool Reader::next(std::vector<std::string_view>& fields) {
  while (std::getline(in_, line_)) {
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    if (line_no_ == 1 && line_.size() >= 3 && line_.compare(0, 3, "\xEF\xBB\xBF") == 0) line_.erase(0, 3);
    if (line_.find_first_not_of(" \t") == std::string::npos) continue;
    fields = split(line_);
    return true;
  }
  return false;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError("invalid number '" + std::string(field) + "'", line);
  return v;
}

std::int64_t to_int(std::string_view field, std::size_t line) {
  std::int64_t v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end)
    throw ParseError("invalid integer '" + std::string(field) + "'", line);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace fleetcast::csv
