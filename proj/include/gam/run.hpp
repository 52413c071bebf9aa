#pragma once

// Command orchestration behind the `gam` tool. Every artifact is a CSV file
// whose leading '#' lines carry run metadata; the rows after them depend only
// on the configuration.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gam/converter.hpp"
#include "gam/steady_state.hpp"

namespace gam {

inline constexpr const char* tool_version = "1.0.0";

enum class Command { steady, bode, simulate, compare };
std::string_view to_string(Command command);
Command command_from_string(std::string_view s);

struct RunConfig {
  std::string spec;  // preset name or spec file path
  Command command = Command::steady;
  int order = 49;
  std::optional<double> fmin;  // Hz, default fs / 1000
  std::optional<double> fmax;  // Hz, default 2 fs
  std::optional<int> points;   // default 20 per decade
  int sideband = 0;
  std::filesystem::path out = ".";
  std::optional<std::string> input;   // frequency-response control
  std::optional<std::string> output;  // output or state; "all" for bode
  std::optional<double> depth;        // oracle modulation depth
  int waveform_points = 256;          // steady
  int periods = 200;                  // simulate
  std::optional<double> modulation_frequency;  // simulate, Hz
  SolverSettings settings;
  std::optional<double> detect_tol;
  std::optional<int> max_periods;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct RunResult {
  int exit_code = 0;
  std::vector<std::filesystem::path> artifacts;
};

/// Preset name or file path.
ConverterSpec load_spec(const std::string& spec);

/// Throws ErrorKind::validation for N < 0, a grid outside (0, 2.5 fs] and an
/// unwritable output directory (which is created if missing).
void validate(const RunConfig& config, const ConverterSpec& spec);

/// Runs one command. Library errors are reported on `err` as
/// "error: <category> <kind>: <message>" and mapped to exit codes 2/3/4.
RunResult run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Strips the '#' metadata lines of a CSV text.
std::string csv_body(const std::string& text);

}  // namespace gam
