#pragma once

namespace sluaudit {

inline constexpr const char* kToolName = "sluaudit";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace sluaudit
