#pragma once

namespace polydisp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace polydisp
