#pragma once

#ifndef DATSCORE_VERSION
#define DATSCORE_VERSION "0.0.0"
#endif

namespace datscore {

inline constexpr const char* kVersion = DATSCORE_VERSION;

}  // namespace datscore
