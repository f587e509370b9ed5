#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "fleetcast/roadnet.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return FLEETCAST_TEST_DATA; }

inline const nlohmann::json& fixtures() {
  static const nlohmann::json doc = [] {
    std::ifstream in(data_dir() / "oracle_fixtures.json");
    return nlohmann::json::parse(in);
  }();
  return doc;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fleetcast_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Nodes placed on a line 100 m apart, no edges.
inline fleetcast::RoadNetwork line_nodes(int n) {
  fleetcast::RoadNetwork net;
  for (int i = 0; i < n; ++i) net.add_node(i, {40.0, -74.0 + 0.0012 * i});
  return net;
}

/// Random directed graph with integer travel times in [1, 20].
inline fleetcast::RoadNetwork random_graph(int n, double density, std::mt19937_64& rng) {
  auto net = line_nodes(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> w(1, 20);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && u(rng) < density) net.add_edge(a, b, w(rng));
  return net;
}

/// Runs a shell command, capturing stdout+stderr. Returns the exit status.
inline int run_capture(const std::string& cmd, std::string& output, const std::filesystem::path& scratch) {
  const auto log = scratch / "command_output.txt";
  const int rc = std::system((cmd + " > '" + log.string() + "' 2>&1").c_str());
  output = read_text(log);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace testing
