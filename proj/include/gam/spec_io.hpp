#pragma once

// Converter spec files: INI-style sections of `key = value` lines.
//
//   [converter]   name, mode
//   [parameters]  NAME = expression          (may use earlier parameters)
//   [circuit]     state = NAME, ENERGY
//                 input = NAME, VALUE
//                 switch = NAME
//                 term = EQUATION, COEFFICIENT, SW1*SW2 | -, OPERAND | 1
//                 output = NAME, STATE:WEIGHT, STATE:WEIGHT ...
//   [modulation]  type = pwm | cot | pfm, switch, carrier, duty, frequency,
//                 kv, on_time, delay, control, sense
//   [rectifier]   type = freewheel | center_tap, switches, current
//   [oracle]      samples_per_period, max_periods, detect_tol, control,
//                 output, depth
//
// Lines starting with '#' are comments. Unknown sections or keys are errors.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "gam/converter.hpp"

namespace gam {

ConverterSpec parse_spec(std::istream& in, const std::string& source = "<input>");
ConverterSpec parse_spec_string(const std::string& text, const std::string& source = "<string>");
ConverterSpec parse_spec_file(const std::filesystem::path& path);

std::string serialize(const ConverterSpec& spec);

/// FNV-1a over the serialized spec.
std::uint64_t spec_hash(const ConverterSpec& spec);
std::string spec_hash_hex(const ConverterSpec& spec);

/// Directory of the bundled presets (compile-time default, overridable with
/// the GAM_PRESET_DIR environment variable).
std::filesystem::path preset_directory();
std::vector<std::string> preset_names();
ConverterSpec load_preset(const std::string& name);

}  // namespace gam
