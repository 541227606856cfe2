#include "rba/core.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "rba/config.hpp"

namespace rba {

namespace {

constexpr std::array<std::string_view, kLevelCount> kLevelNames = {
    "ip", "asn", "country", "ua_full", "browser", "os", "device_type", "rtt"};

std::string format_double(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <std::size_t N>
std::string format_list(const std::array<double, N>& values) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

template <std::size_t N>
void check_weights(const char* name, const std::array<double, N>& w) {
  for (double x : w) {
    if (!(x >= 0.0) || std::isinf(x)) throw ConfigError(std::string(name) + ": weights must be nonnegative");
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(std::string(name) + ": weights must sum to 1");
}

template <std::size_t N>
std::array<double, N> take_weights(std::string_view key, std::string_view value) {
  const auto list = parse_double_list(key, value);
  if (list.size() != N) {
    throw ConfigError(std::string(key) + ": expected " + std::to_string(N) + " comma-separated weights");
  }
  std::array<double, N> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

}  // namespace

std::string_view level_name(Level level) { return kLevelNames[static_cast<std::size_t>(level)]; }

std::optional<Level> level_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kLevelCount; ++i) {
    if (kLevelNames[i] == name) return static_cast<Level>(i);
  }
  return std::nullopt;
}

std::string_view to_string(DeviceType d) {
  switch (d) {
    case DeviceType::desktop: return "desktop";
    case DeviceType::mobile: return "mobile";
    case DeviceType::tablet: return "tablet";
    case DeviceType::bot: return "bot";
    case DeviceType::other: return "other";
    case DeviceType::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<DeviceType> device_type_from_string(std::string_view s) {
  for (auto d : {DeviceType::desktop, DeviceType::mobile, DeviceType::tablet, DeviceType::bot,
                 DeviceType::other, DeviceType::unknown}) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Suspicious: return "suspicious";
    case Outcome::Rejected: return "rejected";
    case Outcome::WrongCredentials: return "wrong_credentials";
  }
  return "unknown";
}

FeatureValues NormalizedFeatures::values() const {
  FeatureValues v;
  at(v, Level::ip) = ip.to_string();
  if (asn) at(v, Level::asn) = std::to_string(*asn);
  at(v, Level::country) = country;
  at(v, Level::ua_full) = ua_full;
  if (browser) at(v, Level::browser) = browser->to_string();
  if (os) at(v, Level::os) = os->to_string();
  if (device_type != DeviceType::unknown) at(v, Level::device_type) = std::string(to_string(device_type));
  if (rtt_ms) at(v, Level::rtt) = std::to_string(*rtt_ms);
  return v;
}

void RiskConfig::validate() const {
  if (!(threshold_reauth > 0.0) || std::isinf(threshold_reauth)) {
    throw ConfigError("threshold_reauth must be a positive finite number");
  }
  if (!(threshold_reject > 0.0)) throw ConfigError("threshold_reject must be positive");
  if (threshold_reauth > threshold_reject) {
    throw ConfigError("threshold_reauth must not exceed threshold_reject");
  }
  check_weights("ip_weights", ip_weights);
  check_weights("ua_weights", ua_weights);
  if (!(global_smoothing_alpha >= 0.0) || std::isinf(global_smoothing_alpha)) {
    throw ConfigError("global_smoothing_alpha must be a nonnegative finite number");
  }
  if (!(user_attack_prior > 0.0) || std::isinf(user_attack_prior)) {
    throw ConfigError("user_attack_prior must be a positive finite number");
  }
  if (!(rep_hit_prob > 0.0 && rep_hit_prob <= 1.0)) throw ConfigError("rep_hit_prob must lie in (0, 1]");
  if (!(rep_miss_prob > 0.0 && rep_miss_prob <= 1.0)) throw ConfigError("rep_miss_prob must lie in (0, 1]");
  if (history_cap == 0) throw ConfigError("history_cap must be positive");
}

RiskConfig RiskConfig::from_entries(std::map<std::string, std::string>& entries) {
  RiskConfig c;
  auto take = [&](const char* key, auto&& apply) {
    if (auto it = entries.find(key); it != entries.end()) {
      apply(it->first, it->second);
      entries.erase(it);
    }
  };
  take("threshold_reauth", [&](auto& k, auto& v) { c.threshold_reauth = parse_double(k, v); });
  take("threshold_reject", [&](auto& k, auto& v) { c.threshold_reject = parse_double(k, v); });
  take("ip_weights", [&](auto& k, auto& v) { c.ip_weights = take_weights<3>(k, v); });
  take("ua_weights", [&](auto& k, auto& v) { c.ua_weights = take_weights<4>(k, v); });
  take("global_smoothing_alpha", [&](auto& k, auto& v) { c.global_smoothing_alpha = parse_double(k, v); });
  take("user_attack_prior", [&](auto& k, auto& v) { c.user_attack_prior = parse_double(k, v); });
  take("attack_data_enabled", [&](auto& k, auto& v) { c.attack_data_enabled = parse_bool(k, v); });
  take("rep_hit_prob", [&](auto& k, auto& v) { c.rep_hit_prob = parse_double(k, v); });
  take("rep_miss_prob", [&](auto& k, auto& v) { c.rep_miss_prob = parse_double(k, v); });
  take("history_cap", [&](auto& k, auto& v) { c.history_cap = parse_size(k, v); });
  take("use_rtt", [&](auto& k, auto& v) { c.use_rtt = parse_bool(k, v); });
  c.validate();
  return c;
}

std::string RiskConfig::to_text() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) {
    out.append(k).append(" = ").append(v).append("\n");
  };
  line("threshold_reauth", format_double(threshold_reauth));
  line("threshold_reject", format_double(threshold_reject));
  line("ip_weights", format_list(ip_weights));
  line("ua_weights", format_list(ua_weights));
  line("global_smoothing_alpha", format_double(global_smoothing_alpha));
  line("user_attack_prior", format_double(user_attack_prior));
  line("attack_data_enabled", attack_data_enabled ? "true" : "false");
  line("rep_hit_prob", format_double(rep_hit_prob));
  line("rep_miss_prob", format_double(rep_miss_prob));
  line("history_cap", std::to_string(history_cap));
  line("use_rtt", use_rtt ? "true" : "false");
  return out;
}

Outcome classify(RiskScore score, const RiskConfig& config) {
  if (score.value < config.threshold_reauth) return Outcome::Success;
  if (std::isinf(config.threshold_reject)) return Outcome::Suspicious;
  if (score.value >= config.threshold_reject) return Outcome::Rejected;
  return Outcome::Suspicious;
}

}  // namespace rba
