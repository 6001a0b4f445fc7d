#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace sppnet::cli {

/// Process exit codes.
enum ExitCode : int { kSuccess = 0, kUsage = 1, kDivergence = 2, kIoError = 3 };

/// Entry point of the `sppnet` tool: gen-data, train, eval, bench.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat `key = value` file; blank lines and `#` comments are skipped.
/// Later keys override earlier ones.
std::vector<std::pair<std::string, std::string>> read_config(const std::filesystem::path& path);

}  // namespace sppnet::cli
