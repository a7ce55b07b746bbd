#pragma once

// Command-line front end. Exit codes: 0 success, 1 failed self-check,
// 2 configuration error, 3 missing or unreadable input, 4 training fault.

#include <iosfwd>
#include <string>
#include <vector>

#include "nalab/config.hpp"

namespace nalab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitTraining = 4;

const std::vector<std::string>& subcommands();
std::string usage();

// Every accepted key with its default value (grid.<label>.* keys are added
// per label found in `user`).
KeyValueConfig config_schema(const KeyValueConfig& user = {});

// `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nalab::cli
