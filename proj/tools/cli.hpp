#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dissect::cli {

/// Settings shared by every subcommand, filled from the command line.
struct RunConfig {
  std::string subcommand;
  std::string netlist;     // path, exclusive with fixture
  std::string fixture;
  std::string experiment;  // osc1, osc2, rectifier
  std::string out;         // output directory; stdout only when empty
  std::string config;      // JSON LearnConfig for `learn`
  std::string predictions; // CSV for `reconstruct`
  std::string models;      // directory written by `learn`, read by `report`
  std::string cache;       // ground-truth cache directory
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::optional<double> tolerance;
  std::optional<double> t_end;
  std::optional<double> step;
  std::string method = "implicit-euler";
  bool reduced = false;
  std::optional<std::size_t> times;
  std::vector<std::size_t> points;
  std::vector<std::pair<std::string, double>> parameters;  // --param NAME=VALUE
  bool seed_given = false;
  bool threads_given = false;
};

/// Exit codes: 0 success, 1 domain error (one JSON line on `err`), 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace dissect::cli
