#include "rba/http_api.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rba/config.hpp"

namespace rba {

namespace {

using nlohmann::json;

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error(int status, std::string_view message) {
  return json_response(status, json{{"error", message}});
}

std::string path_of(const std::string& target) { return target.substr(0, target.find('?')); }

std::optional<std::string> string_field(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<json> parse_object(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  return doc;
}

std::string bearer(const HttpRequest& request) {
  const auto it = request.headers.find("authorization");
  if (it == request.headers.end()) return {};
  constexpr std::string_view prefix = "Bearer ";
  if (it->second.rfind(prefix, 0) != 0) return {};
  return trim(std::string_view(it->second).substr(prefix.size()));
}

int status_code(const AuthResponse& r) {
  switch (r.status) {
    case AuthResponse::Status::success: return 200;
    case AuthResponse::Status::passcode_required: return 202;
    case AuthResponse::Status::failure: return 401;
  }
  return 401;
}

}  // namespace

HttpApi::HttpApi(AuthService& service, HttpApiSettings settings) : service_(service), settings_(std::move(settings)) {}

std::string HttpApi::client_ip(const HttpRequest& request) const {
  if (settings_.trust_forwarded_for) {
    const auto it = request.headers.find("x-forwarded-for");
    if (it != request.headers.end()) {
      const auto first = trim(split(it->second, ',').front());
      if (!first.empty()) return first;
    }
  }
  return request.remote_ip;
}

HttpResponse HttpApi::handle(const HttpRequest& request) {
  const auto path = path_of(request.target);
  try {
    if (path == "/v1/auth/nonce" && request.method == "GET") {
      return json_response(200, json{{"nonce", service_.rtt().issue_nonce()}});
    }
    if (path == "/v1/auth" && request.method == "POST") return auth(request);
    if (path == "/v1/auth/verify" && request.method == "POST") return verify(request);
    if (path == "/v1/session" && request.method == "GET") return session(request);
    if (path == "/v1/rtt") return error(426, "WebSocket upgrade required");
    if (path.rfind("/v1/admin/", 0) == 0) return admin(request, path);
    if (path.rfind("/v1/", 0) == 0) return error(404, "not found");
    if (request.method == "GET" && settings_.static_dir) return static_file(path);
    return error(404, "not found");
  } catch (const std::exception& e) {
    spdlog::error("request {} {} failed: {}", request.method, path, e.what());
    return error(500, "internal error");
  }
}

HttpResponse HttpApi::auth(const HttpRequest& request) {
  const auto doc = parse_object(request.body);
  if (!doc) return error(400, "malformed request");
  const auto username = string_field(*doc, "username");
  const auto password = string_field(*doc, "password");
  if (!username || !password) return error(400, "malformed request");

  AuthRequest req;
  req.username = *username;
  req.password = *password;
  req.ip = client_ip(request);
  if (const auto it = request.headers.find("user-agent"); it != request.headers.end()) req.ua = it->second;
  req.rtt_nonce = string_field(*doc, "rtt_nonce");
  try {
    const auto result = service_.authenticate(req);
    return {status_code(result), "application/json", result.to_json()};
  } catch (const ValidationError&) {
    return error(400, "invalid login context");
  }
}

HttpResponse HttpApi::verify(const HttpRequest& request) {
  const auto doc = parse_object(request.body);
  if (!doc) return error(400, "malformed request");
  const auto username = string_field(*doc, "username");
  const auto passcode = string_field(*doc, "passcode");
  if (!username || !passcode) return error(400, "malformed request");
  const auto result = service_.verify(*username, *passcode);
  return {status_code(result), "application/json", result.to_json()};
}

HttpResponse HttpApi::session(const HttpRequest& request) {
  const auto token = bearer(request);
  const auto s = token.empty() ? std::nullopt : service_.validate_session(token);
  if (!s) return error(401, "invalid session");
  return json_response(200, json{{"user_id", s->user_id}});
}

bool HttpApi::admin_authorized(const HttpRequest& request) const {
  if (settings_.admin_token.empty()) return false;
  return constant_time_equal(bearer(request), settings_.admin_token);
}

HttpResponse HttpApi::admin(const HttpRequest& request, const std::string& path) {
  if (settings_.admin_token.empty()) return error(403, "admin API disabled");
  if (!admin_authorized(request)) return error(401, "admin authorization required");

  if (path == "/v1/admin/config" && request.method == "GET") {
    return {200, "text/plain; charset=utf-8", service_.config_text()};
  }
  if (request.method != "POST") return error(405, "method not allowed");
  const auto doc = request.body.empty() ? std::optional<json>(json::object()) : parse_object(request.body);
  if (!doc) return error(400, "malformed request");

  if (path == "/v1/admin/users") {
    const auto username = string_field(*doc, "username");
    const auto password = string_field(*doc, "password");
    const auto contact = string_field(*doc, "contact").value_or("");
    if (!username || !password) return error(400, "username and password are required");
    try {
      const auto user = service_.create_user(*username, *password, contact);
      return json_response(201, json{{"id", user.id}, {"username", user.username}});
    } catch (const UserError& e) {
      return error(std::string_view(e.what()) == "username already exists" ? 409 : 400, e.what());
    }
  }
  if (path == "/v1/admin/users/contact") {
    const auto username = string_field(*doc, "username");
    const auto contact = string_field(*doc, "contact");
    if (!username || !contact) return error(400, "username and contact are required");
    try {
      service_.set_contact(*username, *contact);
      return json_response(200, json{{"username", *username}});
    } catch (const UserError& e) {
      return error(404, e.what());
    }
  }
  if (path == "/v1/admin/reputation/reload") {
    const auto source = string_field(*doc, "source").value_or("");
    if (!service_.reload_reputation(source)) return json_response(502, json{{"reloaded", false}});
    return json_response(200, json{{"reloaded", true}});
  }
  return error(404, "not found");
}

HttpResponse HttpApi::static_file(const std::string& path) const {
  if (path.find("..") != std::string::npos) return error(404, "not found");
  auto file = *settings_.static_dir / (path == "/" ? "index.html" : path.substr(1));
  std::ifstream in(file, std::ios::binary);
  if (!in) return error(404, "not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto ext = file.extension().string();
  std::string type = "application/octet-stream";
  if (ext == ".html") type = "text/html; charset=utf-8";
  else if (ext == ".js") type = "text/javascript; charset=utf-8";
  else if (ext == ".css") type = "text/css; charset=utf-8";
  return {200, type, ss.str()};
}

}  // namespace rba
