#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace esmhc::cli {

/// Runs one subcommand (synth, split-bands, train, eval, export-h, associate).
/// Returns 0 on success, 2 on configuration errors (including usage), 3 on
/// data errors and 1 otherwise; every failure prints one line to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace esmhc::cli
