#pragma once

namespace umood {

inline constexpr const char* kCodeVersion = "umood-1.0.0";

}  // namespace umood
