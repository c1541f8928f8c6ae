#pragma once

namespace cvhct {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cvhct
