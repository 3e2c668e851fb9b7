#pragma once

#include <iosfwd>

namespace edgechain::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Environment variable consulted when --out is not given.
inline constexpr const char* kOutEnv = "EDGECHAIN_OUT";

/// Exit status: 0 ok, 1 usage/config/I-O error, 2 audit failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace edgechain::cli
