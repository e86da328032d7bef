#pragma once

namespace difflab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace difflab
