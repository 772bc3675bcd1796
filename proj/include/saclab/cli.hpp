#pragma once
// Command-line front end: gen, fit, certify, sweep, pomdp-eval and validate.
//
// Exit status 0 on success, 1 on usage or validation errors (nothing is
// written), 2 when the work itself fails.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace saclab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitFailure = 2;

/// Config kinds: "gen", "fit", "certify", "sweep", "pomdp-eval", "pomdp-model".
/// Empty kind means taken from the "command" field, else guessed from the keys.
std::vector<std::string> validate_config(const nlohmann::json& j, std::string kind = {});
/// Reads the file first; an unreadable file throws std::runtime_error.
std::vector<std::string> validate_config(const std::filesystem::path& path, std::string kind = {});

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace saclab
