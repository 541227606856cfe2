#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

#include "rba/ip_address.hpp"
#include "rba/prefix_trie.hpp"

namespace rba {

struct ReputationParseError : std::runtime_error {
  ReputationParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct ReputationFetchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Set of IPv4/IPv6 prefixes from an ipset/netset blocklist.
class ReputationSet {
public:
  struct Source {
    std::string location;
    std::chrono::system_clock::time_point loaded_at{};
  };

  /// One address or CIDR per line; `#` comments and blank lines ignored.
  /// Bare addresses become /32 or /128 prefixes.
  static ReputationSet parse_list(std::string_view text, std::string location = {});

  void insert(const IpPrefix& prefix) { trie_.insert(prefix, true); }
  bool contains(const IpAddress& ip) const { return trie_.covers(ip); }
  std::size_t size() const { return trie_.size(); }
  const Source& source() const { return source_; }

private:
  PrefixTrie<bool> trie_;
  Source source_;
};

/// Fetches the body at `location`: http(s) URLs via libcurl, anything else
/// as a local file path. Throws ReputationFetchError.
std::string fetch_list_text(const std::string& location);

/// Holds the active reputation set and swaps in refreshed copies.
/// Lookups read an immutable snapshot; a failed refresh keeps the
/// previous set.
class ReputationFeed {
public:
  using Fetcher = std::function<std::string(const std::string&)>;

  explicit ReputationFeed(std::string location = {}, Fetcher fetcher = fetch_list_text);
  ~ReputationFeed();

  ReputationFeed(const ReputationFeed&) = delete;
  ReputationFeed& operator=(const ReputationFeed&) = delete;

  std::shared_ptr<const ReputationSet> active() const;

  /// Loads `location` (or the configured one when empty). Returns false and
  /// logs the reason if fetching or parsing fails.
  bool refresh(const std::string& location = {});

  /// Refreshes every `interval` on a background thread until destruction.
  void start_periodic(std::chrono::milliseconds interval);
  void stop();

  const std::string& location() const { return location_; }

private:
  std::string location_;
  Fetcher fetcher_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ReputationSet> active_;
  std::mutex refresh_mutex_;
  std::condition_variable_any wake_;
  std::jthread worker_;
};

}  // namespace rba
