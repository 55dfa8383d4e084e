#pragma once

// Command-line entry point. Settings resolve as: flag, then BENIGN_<KEY>
// environment variable, then the JSON config file, then the built-in default.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace benign::cli {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace benign::cli
