#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace anglseg {

/// Entry point of the `anglseg` command (args exclude the program name).
/// Returns the process exit code; failures print one "error: <kind>: <message>"
/// line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace anglseg
