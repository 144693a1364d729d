#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace pg2 {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

/// Git/build identifier baked in at configure time.
const char* build_id();

/// Record of one command invocation, written once per output directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string build_id;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
  std::string status = "ok";

  static constexpr const char* kFileName = "run_manifest.json";

  nlohmann::json to_json() const;
  /// Atomic write of `dir / kFileName`.
  void write(const std::filesystem::path& dir) const;
};

/// Writes `contents` to a temporary sibling, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Entry point of the `pg2` tool. `args` excludes the program name. Returns
/// an ExitCode; errors are reported as one line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pg2
