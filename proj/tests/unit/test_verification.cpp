#include <arpa/inet.h>
#include <doctest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <map>
#include <thread>

#include "rba/users.hpp"
#include "rba/verification.hpp"
#include "test_util.hpp"

using namespace rba;
using namespace std::chrono_literals;

TEST_CASE("hmac_sha1 matches RFC 2202 case 2") {
  const auto mac = hmac_sha1(as_bytes("Jefe"), as_bytes("what do ya want for nothing?"));
  CHECK(to_hex(mac) == "effcdf6ae5eb2fa2d27416d5f184df9c259a7c79");
}

TEST_CASE("hotp RFC 4226 vectors") {
  const std::string secret = "12345678901234567890";
  const char* expected[] = {"755224", "287082", "359152", "969429", "338314",
                            "254676", "287922", "162583", "399871", "520489"};
  for (std::uint64_t c = 0; c < 10; ++c) CHECK(hotp(as_bytes(secret), c) == expected[c]);
}

TEST_CASE("hotp argument checks and digits") {
  const std::string secret = "12345678901234567890";
  CHECK(hotp(as_bytes(secret), 0, 8) == "84755224");
  CHECK_THROWS_AS(hotp(as_bytes("short"), 0), std::invalid_argument);
  CHECK_THROWS_AS(hotp(as_bytes(secret), 0, 5), std::invalid_argument);
  CHECK_THROWS_AS(hotp(as_bytes(secret), 0, 9), std::invalid_argument);
}

TEST_CASE("hex and constant-time helpers") {
  const Bytes b{0x00, 0xab, 0xff};
  CHECK(to_hex(b) == "00abff");
  CHECK(from_hex("00ABff") == b);
  CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
  CHECK(constant_time_equal("123456", "123456"));
  CHECK_FALSE(constant_time_equal("123456", "123457"));
  CHECK_FALSE(constant_time_equal("123456", "12345"));
  CHECK(random_bytes(32).size() == 32);
  CHECK(random_bytes(16) != random_bytes(16));
}

TEST_CASE("password hashing") {
  PasswordHasher h;
  h.log2_n = 10;
  const auto encoded = h.hash("correct horse");
  CHECK(encoded.rfind("scrypt$10$8$1$", 0) == 0);
  CHECK(PasswordHasher::verify("correct horse", encoded));
  CHECK_FALSE(PasswordHasher::verify("correct horsf", encoded));
  CHECK(h.hash("correct horse") != encoded);
  CHECK_FALSE(PasswordHasher::verify("x", "not-a-hash"));
  CHECK_FALSE(PasswordHasher::verify("x", "scrypt$99$8$1$00$00"));
}

namespace {

class FakeKeyring : public HotpKeyring {
public:
  std::map<std::string, HotpKey> keys;
  std::map<std::string, std::string> contacts;

  std::optional<HotpKey> advance_counter(const std::string& user) override {
    auto it = keys.find(user);
    if (it == keys.end()) return std::nullopt;
    ++it->second.counter;
    return it->second;
  }
  std::optional<std::string> contact(const std::string& user) const override {
    auto it = contacts.find(user);
    if (it == contacts.end()) return std::nullopt;
    return it->second;
  }
};

class RecordingMessenger : public Messenger {
public:
  std::vector<Message> sent;
  bool fail = false;
  DeliveryResult send(const Message& m) override {
    if (fail) return {false, "mailbox unavailable"};
    sent.push_back(m);
    return {true, {}};
  }
};

struct Fixture {
  FakeKeyring keyring;
  RecordingMessenger messenger;
  std::chrono::system_clock::time_point now{std::chrono::seconds(1700000000)};
  ChallengeManager manager{keyring, messenger, {600s, 3}, [this] { return now; }};
  Bytes secret = Bytes(20, 0x42);

  Fixture() {
    keyring.keys["u1"] = {secret, 0};
    keyring.contacts["u1"] = "alice@example.org";
    keyring.keys["u2"] = {secret, 0};
  }

  std::string code_for(std::uint64_t counter) const { return hotp(secret, counter); }
};

NormalizedFeatures features() {
  NormalizedFeatures f;
  f.ip = *IpAddress::parse("198.51.100.7");
  f.country = "NO";
  f.browser = NameVersion{"Firefox", "95"};
  f.device_type = DeviceType::desktop;
  return f;
}

}  // namespace

TEST_CASE("issue_challenge sends the code") {
  Fixture fx;
  const auto c = fx.manager.issue_challenge("u1", features());
  CHECK(c.counter == 1);
  CHECK(c.remaining_attempts == 3);
  CHECK(c.expires_at - c.issued_at == 600s);
  REQUIRE(fx.messenger.sent.size() == 1);
  const auto& m = fx.messenger.sent[0];
  CHECK(m.to == "alice@example.org");
  CHECK(m.subject.find(fx.code_for(1)) != std::string::npos);
  CHECK(m.body.find("198.51.100.7") != std::string::npos);
  CHECK(m.body.find("Firefox 95") != std::string::npos);
  CHECK(fx.manager.active("u1"));
}

TEST_CASE("issue_challenge error paths") {
  Fixture fx;
  CHECK_THROWS_AS(fx.manager.issue_challenge("u2", features()), ChallengeError);
  CHECK_FALSE(fx.manager.active("u2"));
  fx.messenger.fail = true;
  CHECK_THROWS_AS(fx.manager.issue_challenge("u1", features()), ChallengeError);
  CHECK_FALSE(fx.manager.active("u1"));
}

TEST_CASE("correct code is accepted once") {
  Fixture fx;
  fx.manager.issue_challenge("u1", features());
  const auto accepted = fx.manager.redeem("u1", fx.code_for(1));
  REQUIRE(accepted);
  CHECK(accepted->features == features());
  CHECK_FALSE(fx.manager.active("u1"));
  CHECK_FALSE(fx.manager.verify_code("u1", fx.code_for(1)));
}

TEST_CASE("re-issue invalidates the previous challenge") {
  Fixture fx;
  fx.manager.issue_challenge("u1", features());
  fx.manager.issue_challenge("u1", features());
  CHECK_FALSE(fx.manager.verify_code("u1", fx.code_for(1)));
  // The failed attempt above spent one try on the new challenge.
  CHECK(fx.manager.active("u1")->remaining_attempts == 2);
  CHECK(fx.manager.verify_code("u1", fx.code_for(2)));
}

TEST_CASE("three wrong codes exhaust the challenge") {
  Fixture fx;
  fx.manager.issue_challenge("u1", features());
  const auto right = fx.code_for(1);
  const std::string wrong = right == "000000" ? "111111" : "000000";
  CHECK_FALSE(fx.manager.verify_code("u1", wrong));
  CHECK_FALSE(fx.manager.verify_code("u1", wrong));
  CHECK_FALSE(fx.manager.verify_code("u1", wrong));
  CHECK_FALSE(fx.manager.active("u1"));
  CHECK_FALSE(fx.manager.verify_code("u1", right));
}

TEST_CASE("expired codes are refused") {
  Fixture fx;
  fx.manager.issue_challenge("u1", features());
  fx.now += 601s;
  CHECK_FALSE(fx.manager.verify_code("u1", fx.code_for(1)));
  CHECK_FALSE(fx.manager.active("u1"));
}

TEST_CASE("no challenge means failure") {
  Fixture fx;
  CHECK_FALSE(fx.manager.verify_code("u1", "123456"));
  CHECK_FALSE(fx.manager.verify_code("ghost", "123456"));
}

TEST_CASE("outbox writes rfc5322 files") {
  testutil::TempDir dir;
  OutboxMessenger outbox(dir / "outbox", "rba@example.org");
  CHECK(outbox.send({"bob@example.org", "Your verification code: 123456", "line one\nline two\n"}).delivered);
  CHECK(outbox.send({"carol@example.org", "second", "x"}).delivered);

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir / "outbox")) files.push_back(e.path());
  REQUIRE(files.size() == 2);
  std::sort(files.begin(), files.end());
  CHECK(files[0].extension() == ".eml");
  const auto text = testutil::read_file(files[0]);
  CHECK(text.find("From: rba@example.org\r\n") != std::string::npos);
  CHECK(text.find("To: bob@example.org\r\n") != std::string::npos);
  CHECK(text.find("Subject: Your verification code: 123456\r\n") != std::string::npos);
  CHECK(text.find("\r\n\r\nline one\r\nline two\r\n") != std::string::npos);
  CHECK(text.find("Message-ID: <") != std::string::npos);
}

TEST_CASE("render_rfc5322 refuses header injection") {
  const auto text = render_rfc5322({"a@example.org\r\nBcc: evil@example.org", "s\r\nX: y", "b"}, "f@example.org",
                                   "<id@example.org>");
  CHECK(text.find("\r\nBcc:") == std::string::npos);
  CHECK(text.find("\r\nX: y") == std::string::npos);
}

namespace {

// Minimal single-session SMTP server that records the DATA payload.
class FakeSmtp {
public:
  FakeSmtp() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(fd_, 1);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }
  ~FakeSmtp() {
    if (thread_.joinable()) thread_.join();
    ::close(fd_);
  }
  int port() const { return port_; }
  void join() { thread_.join(); }

  std::string data;
  std::vector<std::string> commands;

private:
  void serve() {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) return;
    auto say = [&](const std::string& s) { ::send(c, s.data(), s.size(), MSG_NOSIGNAL); };
    std::string buf;
    auto line = [&]() -> std::optional<std::string> {
      for (;;) {
        if (const auto pos = buf.find("\r\n"); pos != std::string::npos) {
          auto l = buf.substr(0, pos);
          buf.erase(0, pos + 2);
          return l;
        }
        char tmp[1024];
        const auto n = ::recv(c, tmp, sizeof tmp, 0);
        if (n <= 0) return std::nullopt;
        buf.append(tmp, static_cast<std::size_t>(n));
      }
    };
    say("220 fake ESMTP\r\n");
    while (auto l = line()) {
      commands.push_back(*l);
      if (l->rfind("EHLO", 0) == 0 || l->rfind("HELO", 0) == 0) {
        say("250 fake\r\n");
      } else if (*l == "DATA") {
        say("354 go ahead\r\n");
        while (auto d = line()) {
          if (*d == ".") break;
          data += *d + "\r\n";
        }
        say("250 queued\r\n");
      } else if (*l == "QUIT") {
        say("221 bye\r\n");
        break;
      } else {
        say("250 ok\r\n");
      }
    }
    ::close(c);
  }

  int fd_ = -1;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("smtp messenger talks to a server") {
  FakeSmtp server;
  SmtpMessenger smtp({"smtp://127.0.0.1:" + std::to_string(server.port()), "rba@example.org", "", "", 5});
  const auto r = smtp.send({"dave@example.org", "Your verification code: 654321", "hello\n"});
  server.join();
  CHECK(r.delivered);
  CHECK(std::find(server.commands.begin(), server.commands.end(), "MAIL FROM:<rba@example.org>") !=
        server.commands.end());
  CHECK(std::find(server.commands.begin(), server.commands.end(), "RCPT TO:<dave@example.org>") !=
        server.commands.end());
  CHECK(server.data.find("Subject: Your verification code: 654321") != std::string::npos);
}

TEST_CASE("smtp messenger reports unreachable servers") {
  SmtpMessenger smtp({"smtp://127.0.0.1:1", "rba@example.org", "", "", 2});
  const auto r = smtp.send({"x@example.org", "s", "b"});
  CHECK_FALSE(r.delivered);
  CHECK_FALSE(r.error.empty());
}

TEST_CASE("user directory") {
  testutil::TempDir dir;
  PasswordHasher h;
  h.log2_n = 10;
  std::string id;
  {
    UserDirectory users(h, dir / "users.json");
    const auto u = users.create_user("alice", "pw1", "alice@example.org");
    id = u.id;
    CHECK(u.hotp_secret.size() == 20);
    CHECK_THROWS_AS(users.create_user("alice", "pw2", ""), UserError);
    CHECK_THROWS_AS(users.create_user("", "pw2", ""), UserError);
    CHECK_THROWS_AS(users.create_user("bob", "", ""), UserError);
    CHECK(users.check_password("alice", "pw1") == id);
    CHECK_FALSE(users.check_password("alice", "nope"));
    CHECK_FALSE(users.check_password("mallory", "pw1"));
    CHECK(users.advance_counter(id)->counter == 1);
    CHECK_FALSE(users.advance_counter("999"));
  }
  UserDirectory reopened(h, dir / "users.json");
  CHECK(reopened.size() == 1);
  CHECK(reopened.find_by_name("alice")->id == id);
  CHECK(reopened.contact(id) == "alice@example.org");
  CHECK(reopened.advance_counter(id)->counter == 2);
  reopened.set_contact("alice", "new@example.org");
  CHECK(reopened.contact(id) == "new@example.org");
  CHECK_THROWS_AS(reopened.set_contact("ghost", "x@example.org"), UserError);
  const auto next = reopened.create_user("bob", "pw", "");
  CHECK(next.id != id);
}
