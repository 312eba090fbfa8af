#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace protip {

// Entry point behind the `protip` binary. Returns the process exit status;
// failures print one line `protip: error[<code>]: <message>` to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protip
