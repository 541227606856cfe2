#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rba/core.hpp"
#include "rba/crypto.hpp"

namespace rba {

/// RFC 4226 HOTP: HMAC-SHA-1, dynamic truncation, modulo 10^digits,
/// zero-padded. Secrets shorter than 16 bytes or digits outside 6..8 throw
/// std::invalid_argument.
std::string hotp(std::span<const std::uint8_t> secret, std::uint64_t counter, unsigned digits = 6);

struct Message {
  std::string to;
  std::string subject;
  std::string body;
};

struct DeliveryResult {
  bool delivered = false;
  std::string error;
};

class Messenger {
public:
  virtual ~Messenger() = default;
  virtual DeliveryResult send(const Message& message) = 0;
};

/// Writes each message as an RFC 5322 style `.eml` file into a directory:
/// From, To, Date, Message-ID, Subject and Content-Type headers, a blank
/// line, then the body with CRLF line endings. Files are named
/// `<unix millis>-<sequence>-<random>.eml` and appear atomically.
class OutboxMessenger final : public Messenger {
public:
  OutboxMessenger(std::filesystem::path directory, std::string from);
  DeliveryResult send(const Message& message) override;
  const std::filesystem::path& directory() const { return directory_; }

private:
  std::filesystem::path directory_;
  std::string from_;
  std::mutex mutex_;
  std::uint64_t sequence_ = 0;
};

/// Delivers over SMTP (libcurl). `url` is e.g. `smtp://mail.example.org:25`
/// or `smtps://...`; credentials are optional.
class SmtpMessenger final : public Messenger {
public:
  struct Settings {
    std::string url;
    std::string from;
    std::string username;
    std::string password;
    long timeout_seconds = 30;
  };

  explicit SmtpMessenger(Settings settings);
  DeliveryResult send(const Message& message) override;

private:
  Settings settings_;
};

/// Renders a message as the RFC 5322 text both messengers send.
std::string render_rfc5322(const Message& message, std::string_view from, std::string_view message_id);

struct HotpKey {
  Bytes secret;
  std::uint64_t counter = 0;
};

/// Source of per-user HOTP keys and contact addresses.
class HotpKeyring {
public:
  virtual ~HotpKeyring() = default;
  /// Increments and persists the user's counter, returning the new key
  /// state; nullopt for unknown users.
  virtual std::optional<HotpKey> advance_counter(const std::string& user) = 0;
  virtual std::optional<std::string> contact(const std::string& user) const = 0;
};

struct PendingChallenge {
  std::string user;
  std::uint64_t counter = 0;
  std::chrono::system_clock::time_point issued_at;
  std::chrono::system_clock::time_point expires_at;
  int remaining_attempts = 3;
  NormalizedFeatures features;
};

struct ChallengeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// At most one active HOTP challenge per user.
class ChallengeManager {
public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  struct Settings {
    std::chrono::seconds lifetime{600};
    int max_attempts = 3;
  };

  ChallengeManager(HotpKeyring& keyring, Messenger& messenger);
  ChallengeManager(HotpKeyring& keyring, Messenger& messenger, Settings settings, Clock clock);

  /// Replaces any active challenge for `user`, advances the HOTP counter and
  /// sends the code. Throws ChallengeError when the user has no contact
  /// address or delivery fails; the new challenge is then discarded.
  PendingChallenge issue_challenge(const std::string& user, const NormalizedFeatures& features);

  /// The accepted challenge, consumed. A wrong code spends one attempt.
  std::optional<PendingChallenge> redeem(const std::string& user, std::string_view code);

  bool verify_code(const std::string& user, std::string_view code) { return redeem(user, code).has_value(); }

  std::optional<PendingChallenge> active(const std::string& user) const;

  static Message compose(const std::string& contact, const std::string& code, const NormalizedFeatures& features,
                         std::chrono::seconds lifetime);

private:
  struct Slot {
    PendingChallenge challenge;
    Bytes secret;
  };

  HotpKeyring& keyring_;
  Messenger& messenger_;
  Settings settings_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, Slot> active_;
};

}  // namespace rba
