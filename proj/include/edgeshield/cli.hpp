#pragma once

#include <iosfwd>

namespace edgeshield {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Dispatches the `edgeshield` subcommands. Usage problems return 1 with a
/// message on `err`; runtime failures return 2.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace edgeshield
