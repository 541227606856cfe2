#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rba/core.hpp"
#include "rba/prefix_trie.hpp"

namespace rba {

/// Login context as received from the transport, before validation.
struct RawLoginAttempt {
  std::string username;
  std::string password;
  std::string ip;
  std::string ua;
  std::vector<double> rtt_samples_ms;  // up to five round trips
  std::optional<std::string> passcode;
};

/// Minimum of the samples rounded to the nearest ten milliseconds, ties away
/// from zero. Empty input yields no RTT. Throws ValidationError on negative
/// or non-finite samples.
std::optional<std::int64_t> normalize_rtt(std::span<const double> samples_ms);

struct IpInfo {
  std::optional<std::uint32_t> asn;
  std::optional<std::string> country;
  bool operator==(const IpInfo&) const = default;
};

class IpResolver {
public:
  virtual ~IpResolver() = default;
  virtual IpInfo resolve(const IpAddress& ip) const = 0;
};

/// Longest-prefix-match resolver over a `cidr,asn,country` table.
class PrefixTableResolver final : public IpResolver {
public:
  struct Row {
    IpPrefix prefix;
    std::uint32_t asn = 0;
    std::string country;
  };

  PrefixTableResolver() = default;
  explicit PrefixTableResolver(std::span<const Row> rows);

  /// CSV with `#` comment lines; an optional `cidr,asn,country` header is
  /// skipped. ASNs may carry an "AS" prefix. Throws ValidationError with the
  /// line number on malformed rows.
  static PrefixTableResolver parse_csv(std::string_view text);
  static PrefixTableResolver load_csv(const std::filesystem::path& path);

  IpInfo resolve(const IpAddress& ip) const override;
  std::size_t size() const { return trie_.size(); }

private:
  PrefixTrie<IpInfo> trie_;
};

struct UserAgentInfo {
  std::optional<NameVersion> browser;
  std::optional<NameVersion> os;
  DeviceType device_type = DeviceType::unknown;
  bool operator==(const UserAgentInfo&) const = default;
};

/// Ordered regex rule table; the first matching rule of each kind wins.
///
/// Rule file lines are tab-separated: `kind  name  version  pattern`.
/// `kind` is browser, os or device. For browser and os rules `version` is a
/// literal, `$1` for the first capture group that matched, or `-` for none;
/// underscores in captured versions become dots. Browser versions keep only
/// the major component. For device rules `name` is a device type and
/// `version` must be `-`. Blank lines and `#` comments are ignored.
class UserAgentParser {
public:
  struct Rule {
    enum class Kind { browser, os, device } kind;
    std::string name;
    std::string version;
    std::string pattern;
    std::regex regex;
  };

  /// Parser over the rule table bundled in resources/ua_rules.tsv.
  static const UserAgentParser& builtin();
  static std::string_view builtin_rules_text();

  static UserAgentParser parse_rules(std::string_view text);
  static UserAgentParser load_rules(const std::filesystem::path& path);

  UserAgentInfo parse(std::string_view ua) const;
  std::size_t rule_count() const { return rules_.size(); }

private:
  std::vector<Rule> rules_;
};

/// Validates the raw attempt and derives every sub-feature. Throws
/// ValidationError when the IP does not parse, the username is empty, more
/// than five RTT samples arrive, or an RTT sample is negative.
NormalizedFeatures validate_and_normalize(const RawLoginAttempt& raw, const IpResolver& resolver,
                                          const UserAgentParser& ua_parser = UserAgentParser::builtin());

}  // namespace rba
