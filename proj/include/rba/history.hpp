#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rba/core.hpp"

namespace rba {

struct HistoryIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HistoryLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoginHistoryEntry {
  std::string user;
  std::int64_t timestamp = 0;  // UTC seconds; stored, not scored
  FeatureValues values;
  std::uint64_t seq = 0;

  bool operator==(const LoginHistoryEntry&) const = default;
};

/// Occurrence counts over every stored login: per level value, per user,
/// and in total. Unknown values are not counted. Zero counts are erased so
/// equal histories always produce equal counters.
class GlobalCounters {
public:
  void add(const std::string& user, const FeatureValues& values);
  void remove(const std::string& user, const FeatureValues& values);

  std::uint64_t count(Level level, const std::string& value) const;
  std::uint64_t user_count(const std::string& user) const;
  std::uint64_t total() const { return total_; }

  const std::unordered_map<std::string, std::uint64_t>& level_counts(Level level) const {
    return values_[static_cast<std::size_t>(level)];
  }
  const std::unordered_map<std::string, std::uint64_t>& user_counts() const { return users_; }

  /// From-scratch recount over `entries`.
  static GlobalCounters recount(std::span<const LoginHistoryEntry> entries);

  bool operator==(const GlobalCounters&) const = default;

private:
  std::array<std::unordered_map<std::string, std::uint64_t>, kLevelCount> values_;
  std::unordered_map<std::string, std::uint64_t> users_;
  std::uint64_t total_ = 0;
};

/// Immutable committed state. Per-user histories are shared between
/// successive states, so a snapshot costs one pointer copy.
struct HistoryState {
  std::map<std::string, std::shared_ptr<const std::vector<LoginHistoryEntry>>> users;
  GlobalCounters counters;
  std::uint64_t next_seq = 1;

  std::span<const LoginHistoryEntry> user_history(const std::string& user) const;
  std::vector<LoginHistoryEntry> all_entries() const;
};

using HistorySnapshot = std::shared_ptr<const HistoryState>;

/// Per-user login histories with a count cap and transactionally
/// maintained GlobalCounters.
///
/// Appends serialize on one writer lock. Readers take a snapshot, which
/// only ever observes committed states. When attached to a log file, every
/// append is written and flushed before it is committed in memory; a failed
/// write leaves the in-memory state untouched.
///
/// Log format (UTF-8, one record per line, tab-separated):
///
///     #rba-history v1
///     A <seq> <user> <timestamp> <ip> <asn> <country> <ua_full> <browser> <os> <device_type> <rtt>
///     X <user> <seq>
///
/// `A` appends an entry, `X` evicts the entry with that sequence number.
/// Unknown values are written as `\N`; backslash, tab, CR and LF inside
/// fields are escaped as `\\`, `\t`, `\r` and `\n`.
class HistoryStore {
public:
  explicit HistoryStore(std::size_t history_cap = 100);
  ~HistoryStore();

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  /// Stores the entry under `user` and returns the evicted entry, if any.
  /// `entry.user` and `entry.seq` are assigned by the store.
  std::optional<LoginHistoryEntry> append(const std::string& user, LoginHistoryEntry entry);

  std::vector<LoginHistoryEntry> user_history(const std::string& user) const;
  HistorySnapshot snapshot() const;

  std::size_t history_cap() const { return cap_; }

  /// Writes the live entries as a compacted log. Throws HistoryIoError.
  void save(const std::filesystem::path& path) const;

  /// Replaces the store contents with the log at `path`. On any error the
  /// store is left empty and HistoryLoadError is thrown.
  void load(const std::filesystem::path& path);

  /// Loads `path` if it exists, then appends every later change to it.
  /// The log is compacted when dead records outnumber live ones.
  void attach_log(const std::filesystem::path& path);

  /// Rewrites the attached log with live entries only.
  void compact();

  static std::string serialize(const HistoryState& state);
  static HistoryState parse(std::string_view text, std::size_t history_cap);

private:
  void publish(std::shared_ptr<const HistoryState> next);
  void write_log_lines(const std::string& lines);
  void compact_locked();

  std::size_t cap_;
  mutable std::mutex snapshot_mutex_;  // guards the state_ pointer only
  std::shared_ptr<const HistoryState> state_;
  std::mutex writer_mutex_;
  std::optional<std::filesystem::path> log_path_;
  std::ofstream log_;
  std::size_t log_records_ = 0;
};

}  // namespace rba
