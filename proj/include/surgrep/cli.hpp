#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace surgrep::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// Runs one subcommand (`args` excludes the program name) and returns the
/// process exit status: 0 on success, 1 on a pipeline error, CLI11's code on a
/// usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace surgrep::cli
