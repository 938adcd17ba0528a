#pragma once

namespace latprobe {
inline constexpr const char* kVersion = "0.1.0";
}
