#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opsplit/experiments.hpp"
#include "opsplit/scheme.hpp"

namespace opsplit {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// Bad configuration; the message starts with the offending key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  GenSpec gen;
  Preset preset = Preset::FedProx;
  SchemeParams params;
  std::int64_t rounds = 1;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "out";
  std::int64_t cadence = 1;
  /// When false wall_ms is written as 0 so repeated runs give identical files.
  bool timing = true;
  /// Fully resolved document, defaults included.
  nlohmann::json resolved;
};

/// Resolves a configuration document. Unknown keys, out-of-range values and
/// overrides that contradict the preset raise ConfigError.
RunConfig resolve_config(const nlohmann::json& doc);

/// Reads a JSON config file. An empty file yields an empty document.
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Command-line flags on top of an optional --config file. Returns nullopt
/// after printing help.
std::optional<RunConfig> parse_command_line(int argc, const char* const* argv,
                                            std::ostream& out);

struct SeedRecord {
  std::uint64_t seed = 0;
  std::filesystem::path csv;
  std::vector<RoundMetrics> metrics;
  bool diverged = false;
  std::uint64_t empty_redraws = 0;
  std::uint64_t anderson_fallbacks = 0;
  std::optional<std::string> error;

  double final_gap() const;
};

struct RunSummary {
  double final_gap_mean = 0.0;
  double final_gap_min = 0.0;
  double final_gap_max = 0.0;
  std::size_t seeds_used = 0;
};

struct RunRecord {
  std::string config_hash;
  std::string version = kVersion;
  std::vector<SeedRecord> seeds;
  RunSummary summary;

  bool ok() const;
};

/// FNV-1a over the canonical dump of the resolved document, as 16 hex digits.
std::string config_hash(const nlohmann::json& resolved);

/// Summary over seeds that neither diverged nor failed, in seed order.
RunSummary summarize(const std::vector<SeedRecord>& seeds);

/// Runs one replicate without touching the file system.
SeedRecord run_seed(const RunConfig& config, std::uint64_t seed);

/// Runs every seed (in parallel), writes seed_<s>.csv files and summary.json
/// into config.out_dir.
RunRecord run(const RunConfig& config);

nlohmann::json summary_json(const RunConfig& config, const RunRecord& record);

/// Entry point of the command-line tool; returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace opsplit
