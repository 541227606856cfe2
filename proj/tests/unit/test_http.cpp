#include <doctest.h>
#include <httplib.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "auth_fixture.hpp"
#include "rba/http_api.hpp"
#include "test_util.hpp"

using namespace rba;
using nlohmann::json;
using testutil::AuthFixture;

namespace {

HttpRequest post(const std::string& target, const json& body, const std::string& admin = {}) {
  HttpRequest r;
  r.method = "POST";
  r.target = target;
  r.body = body.dump();
  r.remote_ip = "10.0.0.5";
  r.headers["user-agent"] = testutil::kHomeUa;
  if (!admin.empty()) r.headers["authorization"] = "Bearer " + admin;
  return r;
}

HttpRequest get(const std::string& target, const std::string& bearer = {}) {
  HttpRequest r;
  r.method = "GET";
  r.target = target;
  r.remote_ip = "10.0.0.5";
  if (!bearer.empty()) r.headers["authorization"] = "Bearer " + bearer;
  return r;
}

}  // namespace

TEST_CASE("api: admin routes") {
  AuthFixture fx;
  HttpApi api(*fx.service, {"adm1n", false, std::nullopt});

  CHECK(api.handle(post("/v1/admin/users", {{"username", "alice"}, {"password", "pw"}})).status == 401);
  CHECK(api.handle(post("/v1/admin/users", {{"username", "alice"}, {"password", "pw"}}, "wrong")).status == 401);
  const auto created =
      api.handle(post("/v1/admin/users", {{"username", "alice"}, {"password", "pw"}, {"contact", "a@x.org"}}, "adm1n"));
  CHECK(created.status == 201);
  CHECK(json::parse(created.body)["username"] == "alice");
  CHECK(api.handle(post("/v1/admin/users", {{"username", "alice"}, {"password", "pw"}}, "adm1n")).status == 409);
  CHECK(api.handle(post("/v1/admin/users", {{"username", "bob"}}, "adm1n")).status == 400);
  CHECK(api.handle(post("/v1/admin/users/contact", {{"username", "alice"}, {"contact", "b@x.org"}}, "adm1n"))
            .status == 200);
  CHECK(fx.users.contact(fx.users.find_by_name("alice")->id) == "b@x.org");
  CHECK(api.handle(post("/v1/admin/users/contact", {{"username", "ghost"}, {"contact", "b@x.org"}}, "adm1n"))
            .status == 404);
  const auto config = api.handle(get("/v1/admin/config", "adm1n"));
  CHECK(config.status == 200);
  CHECK(config.body.find("threshold_reauth = 0.003") != std::string::npos);
  CHECK(api.handle(post("/v1/admin/reputation/reload", {{"source", "/nonexistent"}}, "adm1n")).status == 502);

  HttpApi closed(*fx.service, {});
  CHECK(closed.handle(get("/v1/admin/config", "anything")).status == 403);
}

TEST_CASE("api: login flow") {
  AuthFixture fx;
  HttpApi api(*fx.service, {"adm1n", false, std::nullopt});
  fx.service->create_user("alice", "pw", "a@x.org");

  CHECK(api.handle(post("/v1/auth", json::array())).status == 400);
  HttpRequest junk = post("/v1/auth", json::object());
  junk.body = "{not json";
  CHECK(api.handle(junk).status == 400);
  CHECK(api.handle(post("/v1/auth", {{"username", "alice"}})).status == 400);

  const auto bad = api.handle(post("/v1/auth", {{"username", "alice"}, {"password", "nope"}}));
  const auto unknown = api.handle(post("/v1/auth", {{"username", "zed"}, {"password", "nope"}}));
  CHECK(bad.status == 401);
  CHECK(bad.body == unknown.body);
  CHECK(bad.status == unknown.status);

  auto wrong_ip = post("/v1/auth", {{"username", "alice"}, {"password", "pw"}});
  wrong_ip.remote_ip = "not-an-ip";
  CHECK(api.handle(wrong_ip).status == 400);

  const auto ok = api.handle(post("/v1/auth", {{"username", "alice"}, {"password", "pw"}}));
  CHECK(ok.status == 200);
  const auto token = json::parse(ok.body)["token"].get<std::string>();
  CHECK(api.handle(get("/v1/session", token)).status == 200);
  CHECK(api.handle(get("/v1/session", "bogus")).status == 401);
  CHECK(api.handle(get("/v1/session")).status == 401);

  CHECK(api.handle(post("/v1/auth/verify", {{"username", "alice"}, {"passcode", "123456"}})).status == 401);
  CHECK(api.handle(get("/v1/rtt")).status == 426);
  CHECK(api.handle(get("/v1/nothing")).status == 404);
}

TEST_CASE("api: forwarded addresses only when trusted") {
  AuthFixture fx;
  auto req = get("/");
  req.headers["x-forwarded-for"] = "198.51.100.1, 10.0.0.1";
  CHECK(HttpApi(*fx.service, {}).client_ip(req) == "10.0.0.5");
  CHECK(HttpApi(*fx.service, {"", true, std::nullopt}).client_ip(req) == "198.51.100.1");
}

TEST_CASE("api: static files") {
  testutil::TempDir dir;
  testutil::write_file(dir / "index.html", "<h1>hi</h1>");
  AuthFixture fx;
  HttpApi api(*fx.service, {"", false, dir.path()});
  const auto r = api.handle(get("/"));
  CHECK(r.status == 200);
  CHECK(r.content_type.rfind("text/html", 0) == 0);
  CHECK(r.body == "<h1>hi</h1>");
  CHECK(api.handle(get("/../etc/passwd")).status == 404);
  CHECK(api.handle(get("/missing.js")).status == 404);
}

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

struct LiveServer {
  AuthFixture fx;
  HttpApi api{*fx.service, {"adm1n", false, std::nullopt}};
  HttpServer server;

  explicit LiveServer(std::chrono::milliseconds rtt_timeout = std::chrono::milliseconds(2000))
      : server(api, {"127.0.0.1", 0, rtt_timeout}) {
    server.start();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server.port());
    c.set_default_headers({{"User-Agent", testutil::kHomeUa}});
    return c;
  }
};

// Echoes the frames in reverse order after a short delay; `echo_count`
// limits how many come back.
std::string run_rtt_client(unsigned short port, const std::string& nonce, int echo_count) {
  boost::asio::io_context io;
  tcp::resolver resolver(io);
  websocket::stream<tcp::socket> ws(io);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/v1/rtt?nonce=" + nonce);
  std::vector<std::string> frames;
  for (int i = 0; i < 5; ++i) {
    beast::flat_buffer b;
    ws.read(b);
    frames.push_back(beast::buffers_to_string(b.data()));
    CHECK(json::parse(frames.back())["seq"] == i);
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(15));
  for (int i = 4; i >= 5 - echo_count; --i) ws.write(boost::asio::buffer(frames[static_cast<std::size_t>(i)]));
  beast::flat_buffer b;
  beast::error_code ec;
  ws.read(b, ec);
  if (ec) return "closed";
  return beast::buffers_to_string(b.data());
}

}  // namespace

TEST_CASE("server: login with rtt measurement end to end") {
  LiveServer live;
  auto c = live.client();
  auto created = c.Post("/v1/admin/users", httplib::Headers{{"Authorization", "Bearer adm1n"}},
                        R"({"username":"alice","password":"pw","contact":"a@x.org"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);

  const auto nonce_res = c.Get("/v1/auth/nonce");
  REQUIRE(nonce_res);
  const auto nonce = json::parse(nonce_res->body)["nonce"].get<std::string>();

  const auto done = run_rtt_client(live.server.port(), nonce, 5);
  CHECK(json::parse(done)["done"] == true);

  const auto login = c.Post("/v1/auth", json{{"username", "alice"}, {"password", "pw"}, {"rtt_nonce", nonce}}.dump(),
                            "application/json");
  REQUIRE(login);
  CHECK(login->status == 200);
  const auto h = live.fx.history.user_history(live.fx.users.find_by_name("alice")->id);
  REQUIRE(h.size() == 1);
  REQUIRE(at(h[0].values, Level::rtt));
  CHECK(std::stoll(*at(h[0].values, Level::rtt)) % 10 == 0);
  CHECK(at(h[0].values, Level::ip) == "127.0.0.1");
  CHECK(at(h[0].values, Level::browser) == "Chrome 96");

  const auto token = json::parse(login->body)["token"].get<std::string>();
  const auto session = c.Get("/v1/session", httplib::Headers{{"Authorization", "Bearer " + token}});
  REQUIRE(session);
  CHECK(session->status == 200);
}

TEST_CASE("server: incomplete rtt echo records nothing") {
  LiveServer live(std::chrono::milliseconds(300));
  auto c = live.client();
  const auto nonce = json::parse(c.Get("/v1/auth/nonce")->body)["nonce"].get<std::string>();
  CHECK(run_rtt_client(live.server.port(), nonce, 2) == "closed");
  CHECK(live.fx.service->rtt().claim(nonce).empty());
}

TEST_CASE("server: unknown nonce is refused") {
  LiveServer live;
  boost::asio::io_context io;
  tcp::resolver resolver(io);
  websocket::stream<tcp::socket> ws(io);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(live.server.port())));
  ws.handshake("127.0.0.1", "/v1/rtt?nonce=forged");
  beast::flat_buffer b;
  beast::error_code ec;
  ws.read(b, ec);
  CHECK(ec == websocket::error::closed);
  CHECK(ws.reason().code == websocket::close_code::policy_error);
}

TEST_CASE("server: keep-alive and restart") {
  LiveServer live;
  auto c = live.client();
  c.set_keep_alive(true);
  for (int i = 0; i < 5; ++i) {
    const auto r = c.Get("/v1/auth/nonce");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->get_header_value("Cache-Control") == "no-store");
  }
  live.server.stop();
  CHECK_FALSE(c.Get("/v1/auth/nonce"));
}
