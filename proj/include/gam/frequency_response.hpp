#pragma once

#include <complex>
#include <string>
#include <vector>

#include "gam/error.hpp"

namespace gam {

struct FrequencyPoint {
  std::complex<double> s;
  std::complex<double> value;
};

/// Samples of one transfer-function row element H_{m0}(s).
struct FrequencyResponse {
  std::string input;
  std::string output;
  int sideband = 0;
  int order = 0;
  bool baseline = false;
  std::vector<FrequencyPoint> points;
};

/// Converts a phase-input response into a frequency-input response: the
/// phase is the running integral of the frequency deviation, so every value
/// picks up a factor 1/s.
inline FrequencyResponse pfm_from_psm(const FrequencyResponse& response_alpha,
                                      const std::string& input_name = "ws") {
  FrequencyResponse out = response_alpha;
  out.input = input_name;
  for (auto& p : out.points) {
    if (p.s == std::complex<double>(0))
      fail(ErrorKind::pole, "frequency-input response has a pole at s = 0");
    p.value /= p.s;
  }
  return out;
}

}  // namespace gam
