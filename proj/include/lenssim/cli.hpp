#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lenssim {

/// Subcommand dispatcher behind the `lenssim` binary. `args` excludes the
/// program name. Results go to `out` as key=value lines, diagnostics to
/// `err`. Returns the process exit status.
int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_pipeline(int argc, char** argv);

}  // namespace lenssim
