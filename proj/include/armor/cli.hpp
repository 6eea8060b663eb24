#pragma once

#include <string>
#include <vector>

namespace armor {

// Exit codes for the command-line surface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAssetMissing = 3;
inline constexpr int kExitBackend = 4;
inline constexpr int kExitValidation = 5;

/// Dispatches one verb; returns the process exit code. Never throws.
int run_cli(const std::vector<std::string>& args);

}  // namespace armor
