#pragma once

namespace iid {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iid
