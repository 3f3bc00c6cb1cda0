#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vsem/engine.hpp"
#include "vsem/resampling.hpp"
#include "vsem/simlab.hpp"
#include "vsem/vuong.hpp"

namespace vsem {

/// 64-bit FNV-1a digest, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Digest of a file's contents. Throws DataError if it cannot be read.
std::string file_digest(const std::string& path);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 1;
  std::string started;   // ISO-8601 UTC
  std::string finished;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  nlohmann::ordered_json config;
};

/// Current time as ISO-8601 UTC.
std::string utc_timestamp();
/// Fills config_hash from the config object and stamps `started`.
RunManifest make_manifest(std::string command, nlohmann::ordered_json config, std::uint64_t seed);

nlohmann::ordered_json to_json(const RunManifest& m);
nlohmann::ordered_json fit_report(const FittedModel& fit);
/// Comparison report; `bootstrap` adds the percentile interval when present.
nlohmann::ordered_json comparison_report(const ComparisonResult& r,
                                         const std::optional<BootstrapResult>& bootstrap = std::nullopt);
nlohmann::ordered_json to_json(const SimSummary& s);

/// Human-readable summary of a comparison.
std::string comparison_text(const ComparisonResult& r);

}  // namespace vsem
