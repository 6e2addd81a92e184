#pragma once

#include <iosfwd>

namespace hardneg {

/// Environment variable naming the default output root. Without --out a
/// subcommand writes to $HARDNEG_OUTPUT_ROOT/<subcommand>.
inline constexpr const char* kOutputRootEnv = "HARDNEG_OUTPUT_ROOT";

/// Exit codes: 0 success, 1 unexpected failure, 2 configuration or usage
/// error, 3 data error, 4 selfcheck failure.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hardneg
