#pragma once

namespace espresso {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace espresso
