#pragma once

namespace patchmil::version {

inline constexpr const char* kLibrary = "0.1.0";
inline constexpr const char* kTiling = "1";
inline constexpr const char* kMilHead = "1";
inline constexpr const char* kModel = "1";
inline constexpr const char* kAugment = "1";
inline constexpr const char* kData = "1";
inline constexpr const char* kTrain = "1";
inline constexpr const char* kEval = "1";
inline constexpr const char* kViz = "1";

}  // namespace patchmil::version
