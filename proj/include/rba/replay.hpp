#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rba/core.hpp"
#include "rba/risk_engine.hpp"

namespace rba {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maps logical dataset fields onto CSV header names. Defaults follow the
/// public RBA login dataset. `index`, `timestamp` and `rtt` are optional:
/// when their default header is missing from the file they are skipped
/// (the global index then falls back to the 0-based data row position).
struct ColumnMapping {
  std::string index = "index";
  std::string timestamp = "Login Timestamp";
  std::string user_id = "User ID";
  std::string rtt = "Round-Trip Time [ms]";
  std::string ip = "IP Address";
  std::string country = "Country";
  std::string asn = "ASN";
  std::string ua = "User Agent String";
  std::string browser = "Browser Name and Version";
  std::string os = "OS Name and Version";
  std::string device_type = "Device Type";
  std::string success = "Login Successful";

  /// Keys are the member names above; a key set to an empty value removes
  /// an optional column. Unknown keys are rejected.
  static ColumnMapping from_entries(std::map<std::string, std::string> entries);
  static ColumnMapping load(const std::filesystem::path& path);

  std::set<std::string> explicit_keys;  // keys named in the mapping file
};

struct DatasetRow {
  std::uint64_t global_index = 0;
  std::string user;
  std::string timestamp;
  FeatureValues values;  // verbatim dataset values; empty cells are unknown
  bool success = true;
};

/// Successful login rows in file order. Values are used exactly as stored.
/// Throws DatasetError naming a missing column or the bad row number.
std::vector<DatasetRow> load_dataset(const std::filesystem::path& path, const ColumnMapping& mapping = {});
std::vector<DatasetRow> parse_dataset(std::istream& in, const ColumnMapping& mapping = {});

struct ScoreRow {
  std::uint64_t global_index = 0;
  std::string user;
  RiskScore score;
  bool operator==(const ScoreRow&) const = default;
};

struct ReplayOptions {
  std::size_t start = 0;
  std::size_t count = static_cast<std::size_t>(-1);
  std::optional<std::size_t> history_cap;  // uncapped when unset
};

/// Scores rows [start, start + count) each against every row before it.
/// Rows of users without earlier logins are not emitted. Every row is
/// added to the history after it is (possibly) scored.
std::vector<ScoreRow> replay(std::span<const DatasetRow> rows, const RiskEngine& engine,
                             const ReplayOptions& options = {});

struct Slice {
  std::size_t start = 0;
  std::size_t count = 0;
  bool operator==(const Slice&) const = default;
};

/// Contiguous slices covering [start, start + count); sizes differ by at
/// most one and surplus shards are empty and trailing.
std::vector<Slice> shard(std::size_t start, std::size_t count, std::size_t n_shards);

/// Replays each slice independently (on up to `threads` threads) and
/// concatenates the outputs in slice order.
std::vector<ScoreRow> replay_sharded(std::span<const DatasetRow> rows, const RiskEngine& engine,
                                     const ReplayOptions& options, std::size_t n_shards, std::size_t threads = 1);

/// `global_index,user_id,risk_score` with ten decimal places; infinite
/// scores are written as `inf`.
std::string format_scores(std::span<const ScoreRow> scores);
std::vector<ScoreRow> parse_scores(std::istream& in);

struct CompareReport {
  std::size_t rows = 0;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::optional<std::uint64_t> first_mismatch;  // global index beyond tolerance
  std::optional<std::string> structural;        // misaligned or missing rows
  bool ok() const { return !first_mismatch && !structural; }
};

/// Row-aligned comparison on (global index, score); a difference counts
/// when its absolute value exceeds `tol`.
CompareReport compare(std::span<const ScoreRow> a, std::span<const ScoreRow> b, double tol);

}  // namespace rba
