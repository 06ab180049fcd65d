#pragma once

namespace loopgraph {

inline constexpr const char* kVersion = "0.1.0";

} // namespace loopgraph
