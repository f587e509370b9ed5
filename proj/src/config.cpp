#include "fleetcast/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fleetcast/csv.hpp"
#include "fleetcast/error.hpp"

namespace fleetcast {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto dir = file.parent_path();
  return parse(ss.str(), dir.empty() ? std::filesystem::path(".") : dir);
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir_ = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key = value", line_no);
    const auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError("config: empty key", line_no);
    if (c.values_.count(key)) throw ParseError("config: duplicate key '" + key + "'", line_no);
    c.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return c;
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::text(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double RunConfig::number(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return csv::to_double(*v, 0);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects a number, got '" + *v + "'");
  }
}

std::int64_t RunConfig::integer(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return csv::to_int(*v, 0);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects an integer, got '" + *v + "'");
  }
}

bool RunConfig::flag(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("config key '" + key + "' expects true/false, got '" + *v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key, const std::string& fallback) const {
  std::vector<std::string> out;
  const auto raw = text(key, fallback);
  for (auto part : csv::split(raw))
    if (auto t = trim(part); !t.empty()) out.push_back(t);
  return out;
}

std::filesystem::path RunConfig::path(const std::string& key) const {
  const auto v = get(key);
  if (!v || v->empty()) throw ValidationError("config key '" + key + "' is required");
  std::filesystem::path p(*v);
  return p.is_absolute() || overrides_.count(key) ? p : base_dir_ / p;
}

std::filesystem::path RunConfig::existing_path(const std::string& key) const {
  auto p = path(key);
  if (!std::filesystem::exists(p)) throw ValidationError(key + ": file not found: " + p.string());
  return p;
}

std::optional<std::filesystem::path> RunConfig::optional_path(const std::string& key) const {
  if (!has(key) || get(key)->empty()) return std::nullopt;
  return existing_path(key);
}

void RunConfig::check_known(const std::set<std::string>& known) const {
  for (const auto& [k, v] : values_)
    if (!known.count(k)) throw ValidationError("unknown config key '" + k + "'");
}

}  // namespace fleetcast
