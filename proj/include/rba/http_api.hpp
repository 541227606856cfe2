#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "rba/auth_service.hpp"

namespace rba {

struct HttpRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
  std::string remote_ip;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct HttpApiSettings {
  std::string admin_token;  // empty disables the admin endpoints
  bool trust_forwarded_for = false;
  std::optional<std::filesystem::path> static_dir;
};

/// JSON-over-HTTP routes of the v1 API, independent of the socket layer.
///
///   GET  /v1/auth/nonce               -> {"nonce"}
///   POST /v1/auth                     {"username","password","rtt_nonce"?}
///   POST /v1/auth/verify              {"username","passcode"}
///   GET  /v1/session                  Authorization: Bearer <session token>
///   POST /v1/admin/users              {"username","password","contact"}
///   POST /v1/admin/users/contact      {"username","contact"}
///   POST /v1/admin/reputation/reload  {"source"?}
///   GET  /v1/admin/config
///
/// Admin routes require `Authorization: Bearer <admin token>`.
/// GET /v1/rtt is served by HttpServer as a WebSocket upgrade.
class HttpApi {
public:
  HttpApi(AuthService& service, HttpApiSettings settings);

  HttpResponse handle(const HttpRequest& request);

  /// Client address, honouring X-Forwarded-For only when trusted.
  std::string client_ip(const HttpRequest& request) const;

  AuthService& service() { return service_; }

private:
  HttpResponse auth(const HttpRequest& request);
  HttpResponse verify(const HttpRequest& request);
  HttpResponse session(const HttpRequest& request);
  HttpResponse admin(const HttpRequest& request, const std::string& path);
  HttpResponse static_file(const std::string& path) const;
  bool admin_authorized(const HttpRequest& request) const;

  AuthService& service_;
  HttpApiSettings settings_;
};

struct HttpServerSettings {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::chrono::milliseconds rtt_timeout{3000};
};

/// Blocking Boost.Beast server: one thread per connection, keep-alive,
/// plus the RTT WebSocket channel at GET /v1/rtt?nonce=<nonce>.
///
/// RTT channel: after the upgrade the server sends five text frames
/// `{"seq":N,"payload":"<hex>"}` back to back; the client echoes each frame
/// unchanged. When all five echoes arrive within the timeout the samples are
/// bound to the nonce; the server then sends `{"done":true,"samples":5}` and
/// closes. On timeout nothing is recorded and the login proceeds without RTT.
class HttpServer {
public:
  HttpServer(HttpApi& api, HttpServerSettings settings);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts accepting. Throws on bind failure.
  void start();
  void stop();
  unsigned short port() const { return bound_port_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  HttpApi& api_;
  HttpServerSettings settings_;
  unsigned short bound_port_ = 0;
};

}  // namespace rba
