#ifndef PROTOSEL_CLI_HPP
#define PROTOSEL_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace protosel {

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_data = 3, exit_internal = 4 };

/// Runs the command line tool. Diagnostics go to `err`, progress lines to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Maps the exception currently being handled to an exit code, printing its message to `err`.
int exit_code_for_current_exception(std::ostream& err);

/// Reads the `fractions` entry of a plan file.
std::vector<double> read_plan(const std::filesystem::path& path);

}  // namespace protosel

#endif
