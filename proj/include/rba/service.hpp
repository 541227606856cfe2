#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "rba/auth_service.hpp"
#include "rba/http_api.hpp"

namespace rba {

/// Service configuration file: every RiskConfig key plus the keys below,
/// in the shared `key = value` format. Relative store paths resolve
/// against `data_dir`.
struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8080;
  std::filesystem::path data_dir = "rba-data";
  std::filesystem::path history_log = "history.log";
  std::filesystem::path users_file = "users.json";
  std::filesystem::path outbox_dir = "outbox";
  std::filesystem::path request_log = "auth.log";
  std::string resolver_csv;  // empty: ASN and country stay unknown
  std::string ua_rules;      // empty: bundled rule table
  std::string reputation_source;
  double reputation_refresh_hours = 24.0;
  std::string admin_token;
  std::string messenger = "outbox";  // outbox | smtp
  std::string mail_from = "rba@localhost";
  std::string smtp_url;
  std::string smtp_username;
  std::string smtp_password;
  std::string static_dir;
  bool trust_forwarded_for = false;
  long session_ttl_seconds = 3600;
  long challenge_lifetime_seconds = 600;
  int challenge_max_attempts = 3;
  long rtt_nonce_ttl_seconds = 60;
  long rtt_timeout_ms = 3000;
  unsigned kdf_log2_n = 15;
  RiskConfig risk;

  static ServiceConfig from_entries(std::map<std::string, std::string> entries);
  static ServiceConfig load(const std::filesystem::path& path);

  /// `explicit_path` if given, else $RBA_CONFIG, else nullopt (defaults).
  static std::optional<std::filesystem::path> locate(const std::optional<std::filesystem::path>& explicit_path);

  std::filesystem::path in_data_dir(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : data_dir / p;
  }
};

/// Owns every component of a running authentication service.
class ServiceRuntime {
public:
  explicit ServiceRuntime(ServiceConfig config);
  ~ServiceRuntime();

  void start();
  void stop();
  unsigned short port() const { return server_->port(); }

  AuthService& service() { return *service_; }
  HttpApi& api() { return *api_; }
  const ServiceConfig& config() const { return config_; }

private:
  ServiceConfig config_;
  std::ofstream audit_;
  std::unique_ptr<UserDirectory> users_;
  std::unique_ptr<HistoryStore> history_;
  std::unique_ptr<ReputationFeed> reputation_;
  std::unique_ptr<Messenger> messenger_;
  std::unique_ptr<UserAgentParser> ua_parser_;
  std::unique_ptr<AuthService> service_;
  std::unique_ptr<HttpApi> api_;
  std::unique_ptr<HttpServer> server_;
};

}  // namespace rba
