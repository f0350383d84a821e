#pragma once

namespace csasr {
inline constexpr const char* kToolVersion = "csasr 0.1.0";
}
