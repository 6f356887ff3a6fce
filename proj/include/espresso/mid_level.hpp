#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "espresso/error.hpp"

namespace espresso {

inline constexpr std::size_t kMidLevelDims = 8;

// Dimension order is part of every file format and of the UI contract.
inline constexpr std::array<std::string_view, kMidLevelDims> kMidLevelNames = {
    "melodiousness",  "articulation", "rhythm_stability", "rhythm_complexity",
    "dissonance",     "tonal_stability", "minorness",     "onset_density",
};

inline constexpr std::size_t kOnsetDensityIndex = 7;

// A point in the 8-dimensional mid-level perceptual space. Observed vectors
// (catalog entries, training targets) must satisfy validate(); projected
// query profiles live in the same type but may leave the observed range.
struct MidLevelVector {
  std::array<double, kMidLevelDims> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double melodiousness() const { return values[0]; }
  double articulation() const { return values[1]; }
  double rhythm_stability() const { return values[2]; }
  double rhythm_complexity() const { return values[3]; }
  double dissonance() const { return values[4]; }
  double tonal_stability() const { return values[5]; }
  double minorness() const { return values[6]; }
  double onset_density() const { return values[7]; }

  bool all_finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Throws unless the vector is a legal observation.
  void validate(std::string_view context) const {
    if (!all_finite()) {
      throw Error(ErrorCode::non_finite,
                  std::string(context) + ": feature vector has non-finite values");
    }
    if (onset_density() < 0.0) {
      throw Error(ErrorCode::invalid_argument,
                  std::string(context) + ": onset_density must be >= 0");
    }
  }

  friend bool operator==(const MidLevelVector&, const MidLevelVector&) = default;
};

}  // namespace espresso
