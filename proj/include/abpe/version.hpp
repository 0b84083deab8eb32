#pragma once

#define ABPE_VERSION_STRING "0.1.0"

namespace abpe {
inline constexpr const char* kToolVersion = ABPE_VERSION_STRING;
}
