#include "rba/service.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>

#include "rba/config.hpp"

namespace rba {

ServiceConfig ServiceConfig::from_entries(std::map<std::string, std::string> entries) {
  ServiceConfig c;
  c.risk = RiskConfig::from_entries(entries);

  auto take = [&](const char* key, auto&& apply) {
    if (auto it = entries.find(key); it != entries.end()) {
      apply(it->first, it->second);
      entries.erase(it);
    }
  };
  auto str = [&](std::string& field) { return [&field](auto&, auto& v) { field = v; }; };
  auto path = [&](std::filesystem::path& field) { return [&field](auto&, auto& v) { field = v; }; };
  auto integer = [&](auto& field) {
    return [&field](auto& k, auto& v) { field = static_cast<std::decay_t<decltype(field)>>(parse_size(k, v)); };
  };

  take("bind_address", str(c.bind_address));
  take("port", [&](auto& k, auto& v) {
    const auto p = parse_size(k, v);
    if (p > 65535) throw ConfigError("port out of range");
    c.port = static_cast<unsigned short>(p);
  });
  take("data_dir", path(c.data_dir));
  take("history_log", path(c.history_log));
  take("users_file", path(c.users_file));
  take("outbox_dir", path(c.outbox_dir));
  take("request_log", path(c.request_log));
  take("resolver_csv", str(c.resolver_csv));
  take("ua_rules", str(c.ua_rules));
  take("reputation_source", str(c.reputation_source));
  take("reputation_refresh_hours", [&](auto& k, auto& v) { c.reputation_refresh_hours = parse_double(k, v); });
  take("admin_token", str(c.admin_token));
  take("messenger", str(c.messenger));
  take("mail_from", str(c.mail_from));
  take("smtp_url", str(c.smtp_url));
  take("smtp_username", str(c.smtp_username));
  take("smtp_password", str(c.smtp_password));
  take("static_dir", str(c.static_dir));
  take("trust_forwarded_for", [&](auto& k, auto& v) { c.trust_forwarded_for = parse_bool(k, v); });
  take("session_ttl_seconds", integer(c.session_ttl_seconds));
  take("challenge_lifetime_seconds", integer(c.challenge_lifetime_seconds));
  take("challenge_max_attempts", integer(c.challenge_max_attempts));
  take("rtt_nonce_ttl_seconds", integer(c.rtt_nonce_ttl_seconds));
  take("rtt_timeout_ms", integer(c.rtt_timeout_ms));
  take("kdf_log2_n", integer(c.kdf_log2_n));
  reject_unknown_keys(entries);

  if (c.messenger != "outbox" && c.messenger != "smtp") throw ConfigError("messenger must be 'outbox' or 'smtp'");
  if (c.messenger == "smtp" && c.smtp_url.empty()) throw ConfigError("smtp messenger needs smtp_url");
  if (c.challenge_max_attempts < 1) throw ConfigError("challenge_max_attempts must be at least 1");
  if (c.kdf_log2_n < 10 || c.kdf_log2_n > 22) throw ConfigError("kdf_log2_n must lie in [10, 22]");
  if (!(c.reputation_refresh_hours > 0)) throw ConfigError("reputation_refresh_hours must be positive");
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) { return from_entries(load_key_values(path)); }

std::optional<std::filesystem::path> ServiceConfig::locate(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return explicit_path;
  if (const char* env = std::getenv("RBA_CONFIG"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

ServiceRuntime::ServiceRuntime(ServiceConfig config) : config_(std::move(config)) {
  std::filesystem::create_directories(config_.data_dir);

  audit_.open(config_.in_data_dir(config_.request_log), std::ios::app);
  if (!audit_) throw ConfigError("cannot open request log " + config_.in_data_dir(config_.request_log).string());

  PasswordHasher hasher;
  hasher.log2_n = config_.kdf_log2_n;
  users_ = std::make_unique<UserDirectory>(hasher, config_.in_data_dir(config_.users_file));

  history_ = std::make_unique<HistoryStore>(config_.risk.history_cap);
  history_->attach_log(config_.in_data_dir(config_.history_log));

  reputation_ = std::make_unique<ReputationFeed>(config_.reputation_source);
  if (!config_.reputation_source.empty()) reputation_->refresh();

  if (config_.messenger == "smtp") {
    messenger_ = std::make_unique<SmtpMessenger>(
        SmtpMessenger::Settings{config_.smtp_url, config_.mail_from, config_.smtp_username, config_.smtp_password});
  } else {
    messenger_ = std::make_unique<OutboxMessenger>(config_.in_data_dir(config_.outbox_dir), config_.mail_from);
  }

  std::shared_ptr<const IpResolver> resolver;
  if (!config_.resolver_csv.empty()) {
    resolver = std::make_shared<PrefixTableResolver>(PrefixTableResolver::load_csv(config_.resolver_csv));
  }
  ua_parser_ = std::make_unique<UserAgentParser>(
      config_.ua_rules.empty() ? UserAgentParser::builtin() : UserAgentParser::load_rules(config_.ua_rules));

  AuthServiceSettings settings;
  settings.risk = config_.risk;
  settings.session_ttl = std::chrono::seconds(config_.session_ttl_seconds);
  settings.rtt_nonce_ttl = std::chrono::seconds(config_.rtt_nonce_ttl_seconds);
  settings.challenge.lifetime = std::chrono::seconds(config_.challenge_lifetime_seconds);
  settings.challenge.max_attempts = config_.challenge_max_attempts;
  service_ = std::make_unique<AuthService>(settings, *users_, *history_, *reputation_, *messenger_,
                                           std::move(resolver), *ua_parser_);
  service_->set_audit_log(&audit_);

  HttpApiSettings api_settings;
  api_settings.admin_token = config_.admin_token;
  api_settings.trust_forwarded_for = config_.trust_forwarded_for;
  if (!config_.static_dir.empty()) api_settings.static_dir = config_.static_dir;
  api_ = std::make_unique<HttpApi>(*service_, api_settings);

  server_ = std::make_unique<HttpServer>(
      *api_, HttpServerSettings{config_.bind_address, config_.port, std::chrono::milliseconds(config_.rtt_timeout_ms)});
}

ServiceRuntime::~ServiceRuntime() { stop(); }

void ServiceRuntime::start() {
  server_->start();
  if (!config_.reputation_source.empty()) {
    reputation_->start_periodic(std::chrono::milliseconds(
        static_cast<long long>(config_.reputation_refresh_hours * 3600.0 * 1000.0)));
  }
}

void ServiceRuntime::stop() {
  if (server_) server_->stop();
  if (reputation_) reputation_->stop();
}

}  // namespace rba
