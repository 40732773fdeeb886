#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace gtpde {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Invalid user input: bad parameters, malformed files, unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that cannot produce a meaningful result (NaN, divergence,
/// broken conservation, degenerate geometry).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps x into [0, 2pi).
inline double wrap_periodic(double x) {
  double y = x - kTwoPi * static_cast<double>(static_cast<long long>(x / kTwoPi));
  if (y < 0.0) y += kTwoPi;
  if (y >= kTwoPi) y -= kTwoPi;
  return y;
}

}  // namespace gtpde
