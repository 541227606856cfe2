#include <spdlog/spdlog.h>
#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <cctype>
#include <condition_variable>
#include <list>
#include <json.hpp>

#include "rba/http_api.hpp"

namespace rba {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::string query_param(std::string_view target, std::string_view name) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return {};
  auto query = target.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq != std::string_view::npos && pair.substr(0, eq) == name) return std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return {};
}

void serve_connection(tcp::socket& socket, HttpApi& api, const HttpServerSettings& settings,
                      const std::atomic<bool>& stopping);
void serve_rtt(tcp::socket& socket, http::request<http::string_body> req, HttpApi& api,
               const HttpServerSettings& settings);

}  // namespace

struct HttpServer::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};

  std::mutex mutex;
  std::condition_variable idle;
  std::list<tcp::socket*> live;
  std::size_t active = 0;
};

HttpServer::HttpServer(HttpApi& api, HttpServerSettings settings)
    : impl_(std::make_unique<Impl>()), api_(api), settings_(std::move(settings)) {}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start() {
  auto& impl = *impl_;
  const tcp::endpoint endpoint(asio::ip::make_address(settings_.bind_address), settings_.port);
  impl.acceptor.open(endpoint.protocol());
  impl.acceptor.set_option(asio::socket_base::reuse_address(true));
  impl.acceptor.bind(endpoint);
  impl.acceptor.listen();
  bound_port_ = impl.acceptor.local_endpoint().port();
  spdlog::info("listening on {}:{}", settings_.bind_address, bound_port_);

  impl.accept_thread = std::thread([this] {
    auto& impl = *impl_;
    while (!impl.stopping) {
      // Each connection runs on its own io_context so the RTT channel can
      // bound its reads with run_for().
      auto io = std::make_unique<asio::io_context>();
      tcp::socket socket(*io);
      beast::error_code ec;
      impl.acceptor.accept(socket, ec);
      if (ec) {
        if (impl.stopping) break;
        continue;
      }
      std::unique_lock lock(impl.mutex);
      ++impl.active;
      lock.unlock();
      std::thread([this, io = std::move(io), s = std::move(socket)]() mutable {
        auto& impl = *impl_;
        std::list<tcp::socket*>::iterator self;
        {
          std::lock_guard guard(impl.mutex);
          self = impl.live.insert(impl.live.end(), &s);
        }
        try {
          serve_connection(s, api_, settings_, impl.stopping);
        } catch (const std::exception& e) {
          spdlog::debug("connection closed: {}", e.what());
        }
        std::lock_guard guard(impl.mutex);
        impl.live.erase(self);
        --impl.active;
        impl.idle.notify_all();
      }).detach();
    }
  });
}

void HttpServer::stop() {
  if (!impl_ || !impl_->accept_thread.joinable()) return;
  auto& impl = *impl_;
  impl.stopping = true;
  beast::error_code ec;
  impl.acceptor.cancel(ec);
  ::shutdown(impl.acceptor.native_handle(), SHUT_RDWR);
  impl.acceptor.close(ec);
  impl.accept_thread.join();

  std::unique_lock lock(impl.mutex);
  for (auto* s : impl.live) s->shutdown(tcp::socket::shutdown_both, ec);
  impl.idle.wait(lock, [&] { return impl.active == 0; });
}

namespace {

void serve_connection(tcp::socket& socket, HttpApi& api, const HttpServerSettings& settings,
                      const std::atomic<bool>& stopping) {
  beast::flat_buffer buffer;
  beast::error_code ec;
  const auto remote = socket.remote_endpoint(ec).address().to_string();

  while (!stopping) {
    http::request_parser<http::string_body> parser;
    parser.body_limit(64 * 1024);
    http::read(socket, buffer, parser, ec);
    if (ec) return;
    auto req = parser.release();

    if (websocket::is_upgrade(req)) {
      serve_rtt(socket, std::move(req), api, settings);
      return;
    }

    HttpRequest in;
    in.method = std::string(req.method_string());
    in.target = std::string(req.target());
    in.body = std::move(req.body());
    in.remote_ip = remote;
    for (const auto& field : req) {
      std::string name(field.name_string());
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      in.headers[name] = std::string(field.value());
    }
    const auto out = api.handle(in);

    http::response<http::string_body> res{static_cast<http::status>(out.status), req.version()};
    res.set(http::field::server, "rba");
    res.set(http::field::content_type, out.content_type);
    res.set(http::field::cache_control, "no-store");
    res.keep_alive(req.keep_alive());
    res.body() = out.body;
    res.prepare_payload();
    http::write(socket, res, ec);
    if (ec || !res.keep_alive()) return;
  }
}

void serve_rtt(tcp::socket& socket, http::request<http::string_body> req, HttpApi& api,
               const HttpServerSettings& settings) {
  const std::string target(req.target());
  if (target.substr(0, target.find('?')) != "/v1/rtt") {
    http::response<http::string_body> res{http::status::not_found, req.version()};
    res.keep_alive(false);
    res.prepare_payload();
    http::write(socket, res);
    return;
  }
  const auto nonce = query_param(target, "nonce");

  websocket::stream<tcp::socket&> ws(socket);
  ws.accept(req);
  ws.text(true);

  auto& io = static_cast<asio::io_context&>(socket.get_executor().context());
  // The closing handshake waits for the peer, so it gets the same bound as
  // the echoes.
  auto close = [&](const websocket::close_reason& reason) {
    ws.async_close(reason, [](beast::error_code) {});
    io.restart();
    io.run_for(settings.rtt_timeout);
    if (!io.stopped()) {
      beast::error_code ignored;
      socket.cancel(ignored);
      io.restart();
      io.run();
    }
  };

  // Confirm the nonce is live before measuring; record() refreshes nothing
  // but rejects unknown or expired nonces.
  if (nonce.empty() || !api.service().rtt().record(nonce, {})) {
    close(websocket::close_reason(websocket::close_code::policy_error, "unknown nonce"));
    return;
  }
  RttProbe probe;
  for (int seq = 0; seq < RttProbe::kRounds; ++seq) {
    const auto frame = probe.ping(seq, std::chrono::steady_clock::now());
    ws.write(asio::buffer(frame));
  }

  const auto deadline = std::chrono::steady_clock::now() + settings.rtt_timeout;
  beast::flat_buffer buffer;
  bool failed = false;
  while (!probe.complete() && !failed) {
    buffer.clear();
    bool finished = false;
    beast::error_code read_ec;
    std::chrono::steady_clock::time_point arrived;
    ws.async_read(buffer, [&](beast::error_code ec, std::size_t) {
      finished = true;
      read_ec = ec;
      arrived = std::chrono::steady_clock::now();
    });
    io.restart();
    io.run_until(deadline);
    if (!finished) {
      // Out of time: abandon the connection without a closing handshake.
      beast::error_code ignored;
      socket.cancel(ignored);
      io.restart();
      io.run();
      socket.shutdown(tcp::socket::shutdown_both, ignored);
      return;
    }
    if (read_ec) failed = true;
    else probe.on_echo(beast::buffers_to_string(buffer.data()), arrived);
  }
  if (failed) return;
  api.service().rtt().record(nonce, probe.samples_ms());
  const auto done = nlohmann::json{{"done", true}, {"samples", RttProbe::kRounds}}.dump();
  beast::error_code ec;
  ws.write(asio::buffer(done), ec);
  if (ec) return;
  close(websocket::close_code::normal);
}

}  // namespace

}  // namespace rba
