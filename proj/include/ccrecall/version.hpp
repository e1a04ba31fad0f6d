#pragma once

namespace ccrecall {
inline constexpr const char* kVersion = "0.1.0";
}
