#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace framesel {

// Entry point of the `framesel` tool. args[0] is the program name.
// Structured results go to `out` as line-delimited JSON; failures print a
// single JSON line {"error": <kind>, "message": <text>} to `err` and return
// nonzero (2 for usage errors, 1 otherwise).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace framesel
