#pragma once

namespace markovdiff {

inline constexpr const char* kVersion = "markovdiff 0.1.0";

} // namespace markovdiff
