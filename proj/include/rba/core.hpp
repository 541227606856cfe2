#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rba/ip_address.hpp"

namespace rba {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every granularity level the engine can compare, most specific first
/// within each feature. The numeric order is also the column order used by
/// the history log.
enum class Level : std::uint8_t { ip, asn, country, ua_full, browser, os, device_type, rtt };

inline constexpr std::size_t kLevelCount = 8;

std::string_view level_name(Level level);
std::optional<Level> level_from_name(std::string_view name);

/// Materialized level values of one login. `nullopt` means unknown.
using FeatureValues = std::array<std::optional<std::string>, kLevelCount>;

inline const std::optional<std::string>& at(const FeatureValues& v, Level l) {
  return v[static_cast<std::size_t>(l)];
}
inline std::optional<std::string>& at(FeatureValues& v, Level l) {
  return v[static_cast<std::size_t>(l)];
}

enum class DeviceType : std::uint8_t { desktop, mobile, tablet, bot, other, unknown };

std::string_view to_string(DeviceType d);
std::optional<DeviceType> device_type_from_string(std::string_view s);

struct NameVersion {
  std::string name;
  std::string version;  // may be empty

  /// "Chrome 96", or just the name when no version is known.
  std::string to_string() const { return version.empty() ? name : name + " " + version; }
  bool operator==(const NameVersion&) const = default;
};

/// Validated login context with all sub-features derived.
struct NormalizedFeatures {
  IpAddress ip;
  std::optional<std::uint32_t> asn;
  std::optional<std::string> country;
  std::string ua_full;
  std::optional<NameVersion> browser;
  std::optional<NameVersion> os;
  DeviceType device_type = DeviceType::unknown;
  std::optional<std::int64_t> rtt_ms;  // always a multiple of 10

  FeatureValues values() const;
  bool operator==(const NormalizedFeatures&) const = default;
};

/// Nonnegative risk score; +infinity when some feature never matched the
/// user's history at any level.
struct RiskScore {
  double value = 0.0;

  static RiskScore infinite() { return {std::numeric_limits<double>::infinity()}; }
  bool is_infinite() const { return value == std::numeric_limits<double>::infinity(); }
  auto operator<=>(const RiskScore&) const = default;
};

enum class Outcome : std::uint8_t { Success, Suspicious, Rejected, WrongCredentials };

std::string_view to_string(Outcome o);

struct RiskConfig {
  double threshold_reauth = 0.003;
  double threshold_reject = 0.018;
  std::array<double, 3> ip_weights{0.6, 0.3, 0.1};         // ip, asn, country
  std::array<double, 4> ua_weights{0.5, 0.25, 0.15, 0.1};  // ua, browser, os, device
  double global_smoothing_alpha = 1.0;
  double user_attack_prior = 1.0;
  bool attack_data_enabled = false;
  double rep_hit_prob = 1.0;
  double rep_miss_prob = 0.1;
  std::size_t history_cap = 100;
  bool use_rtt = true;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// Reads the RiskConfig keys out of `entries`, erasing each consumed key.
  /// Missing keys keep their defaults. The result is validated.
  static RiskConfig from_entries(std::map<std::string, std::string>& entries);

  /// One `key = value` line per field, in a stable order.
  std::string to_text() const;
};

/// Success below `threshold_reauth`, Rejected at or above
/// `threshold_reject`, Suspicious in between. An infinite reject threshold
/// never rejects, not even an infinite score.
Outcome classify(RiskScore score, const RiskConfig& config);

}  // namespace rba
