#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

// Runs `cdml <args...>` (args excludes the program name). Reports go to `out`
// unless --out is given; errors are written to `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Merges a flat key=value config file (given by --config PATH) into the
// argument list. Keys already present on the command line are left alone.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace cdml::cli
