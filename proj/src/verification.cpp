#include "rba/verification.hpp"

#include <curl/curl.h>

#include <ctime>
#include <fstream>

namespace rba {

std::string hotp(std::span<const std::uint8_t> secret, std::uint64_t counter, unsigned digits) {
  if (secret.size() < 16) throw std::invalid_argument("HOTP secret must be at least 16 bytes");
  if (digits < 6 || digits > 8) throw std::invalid_argument("HOTP digits must be 6, 7 or 8");

  std::array<std::uint8_t, 8> message{};
  for (int i = 7; i >= 0; --i) {
    message[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(counter & 0xFF);
    counter >>= 8;
  }
  const auto mac = hmac_sha1(secret, message);

  // Dynamic truncation: the low nibble of the last byte picks a 31-bit window.
  const unsigned offset = mac[19] & 0x0F;
  const std::uint32_t binary = (static_cast<std::uint32_t>(mac[offset] & 0x7F) << 24) |
                               (static_cast<std::uint32_t>(mac[offset + 1]) << 16) |
                               (static_cast<std::uint32_t>(mac[offset + 2]) << 8) |
                               static_cast<std::uint32_t>(mac[offset + 3]);
  std::uint32_t modulus = 1;
  for (unsigned i = 0; i < digits; ++i) modulus *= 10;

  auto code = std::to_string(binary % modulus);
  return std::string(digits - code.size(), '0') + code;
}

namespace {

std::string rfc5322_date(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm utc{};
  gmtime_r(&tt, &utc);
  char buf[64];
  std::strftime(buf, sizeof buf, "%a, %d %b %Y %H:%M:%S +0000", &utc);
  return buf;
}

std::string crlf(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '\r') continue;
    if (c == '\n') out += '\r';
    out += c;
  }
  return out;
}

// Header values must not carry line breaks.
std::string header_value(std::string_view v) {
  std::string out;
  for (char c : v) out += (c == '\r' || c == '\n') ? ' ' : c;
  return out;
}

struct UploadCursor {
  const std::string* data;
  std::size_t offset = 0;
};

std::size_t read_upload(char* buffer, std::size_t size, std::size_t n, void* user) {
  auto* cursor = static_cast<UploadCursor*>(user);
  const std::size_t left = cursor->data->size() - cursor->offset;
  const std::size_t count = std::min(left, size * n);
  std::copy_n(cursor->data->data() + cursor->offset, count, buffer);
  cursor->offset += count;
  return count;
}

std::string new_message_id() { return "<" + to_hex(random_bytes(12)) + "@rba.local>"; }

}  // namespace

std::string render_rfc5322(const Message& message, std::string_view from, std::string_view message_id) {
  std::string out;
  out += "From: " + header_value(from) + "\r\n";
  out += "To: " + header_value(message.to) + "\r\n";
  out += "Date: " + rfc5322_date(std::chrono::system_clock::now()) + "\r\n";
  out += "Message-ID: " + std::string(message_id) + "\r\n";
  out += "Subject: " + header_value(message.subject) + "\r\n";
  out += "MIME-Version: 1.0\r\n";
  out += "Content-Type: text/plain; charset=utf-8\r\n";
  out += "\r\n";
  out += crlf(message.body);
  if (out.size() < 2 || out.compare(out.size() - 2, 2, "\r\n") != 0) out += "\r\n";
  return out;
}

OutboxMessenger::OutboxMessenger(std::filesystem::path directory, std::string from)
    : directory_(std::move(directory)), from_(std::move(from)) {
  std::filesystem::create_directories(directory_);
}

DeliveryResult OutboxMessenger::send(const Message& message) {
  std::uint64_t seq;
  {
    std::lock_guard lock(mutex_);
    seq = ++sequence_;
  }
  const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  const auto name = std::to_string(millis) + "-" + std::to_string(seq) + "-" + to_hex(random_bytes(4)) + ".eml";
  const auto final_path = directory_ / name;
  const auto tmp_path = directory_ / ("." + name + ".tmp");
  const auto text = render_rfc5322(message, from_, new_message_id());
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) return {false, "cannot write " + tmp_path.string()};
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) return {false, ec.message()};
  return {true, {}};
}

SmtpMessenger::SmtpMessenger(Settings settings) : settings_(std::move(settings)) {}

DeliveryResult SmtpMessenger::send(const Message& message) {
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
  if (!curl) return {false, "curl initialisation failed"};

  const auto payload = render_rfc5322(message, settings_.from, new_message_id());
  UploadCursor cursor{&payload};
  const auto mail_from = "<" + settings_.from + ">";
  const auto rcpt = "<" + message.to + ">";
  std::unique_ptr<curl_slist, decltype(&curl_slist_free_all)> recipients(
      curl_slist_append(nullptr, rcpt.c_str()), curl_slist_free_all);

  curl_easy_setopt(curl.get(), CURLOPT_URL, settings_.url.c_str());
  if (!settings_.username.empty()) {
    curl_easy_setopt(curl.get(), CURLOPT_USERNAME, settings_.username.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_PASSWORD, settings_.password.c_str());
  }
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_FROM, mail_from.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_RCPT, recipients.get());
  curl_easy_setopt(curl.get(), CURLOPT_READFUNCTION, read_upload);
  curl_easy_setopt(curl.get(), CURLOPT_READDATA, &cursor);
  curl_easy_setopt(curl.get(), CURLOPT_UPLOAD, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT, settings_.timeout_seconds);
  curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);

  const auto rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) return {false, curl_easy_strerror(rc)};
  return {true, {}};
}

ChallengeManager::ChallengeManager(HotpKeyring& keyring, Messenger& messenger)
    : ChallengeManager(keyring, messenger, Settings{}, [] { return std::chrono::system_clock::now(); }) {}

ChallengeManager::ChallengeManager(HotpKeyring& keyring, Messenger& messenger, Settings settings, Clock clock)
    : keyring_(keyring), messenger_(messenger), settings_(settings), clock_(std::move(clock)) {}

Message ChallengeManager::compose(const std::string& contact, const std::string& code,
                                  const NormalizedFeatures& features, std::chrono::seconds lifetime) {
  auto or_unknown = [](const auto& opt) -> std::string { return opt ? opt->to_string() : "unknown"; };
  Message m;
  m.to = contact;
  m.subject = "Your verification code: " + code;
  m.body = "Your verification code: " + code + "\n\n" +
           "Someone signed in to your account from an unfamiliar context:\n" +
           "  IP address: " + features.ip.to_string() + "\n" +
           "  Country: " + features.country.value_or("unknown") + "\n" +
           "  Browser: " + or_unknown(features.browser) + "\n" +
           "  Operating system: " + or_unknown(features.os) + "\n" +
           "  Device: " + std::string(to_string(features.device_type)) + "\n\n" +
           "Enter the code on the sign-in page to continue. It expires in " +
           std::to_string(lifetime.count() / 60) + " minutes.\n" +
           "If this was not you, change your password.\n";
  return m;
}

PendingChallenge ChallengeManager::issue_challenge(const std::string& user, const NormalizedFeatures& features) {
  {
    std::lock_guard lock(mutex_);
    active_.erase(user);
  }
  const auto contact = keyring_.contact(user);
  if (!contact || contact->empty()) throw ChallengeError("no contact address registered for user");
  auto key = keyring_.advance_counter(user);
  if (!key) throw ChallengeError("unknown user");

  const auto code = hotp(key->secret, key->counter);
  const auto now = clock_();
  PendingChallenge challenge{user, key->counter, now, now + settings_.lifetime, settings_.max_attempts, features};

  const auto result = messenger_.send(compose(*contact, code, features, settings_.lifetime));
  if (!result.delivered) throw ChallengeError("verification code delivery failed: " + result.error);

  std::lock_guard lock(mutex_);
  active_[user] = Slot{challenge, std::move(key->secret)};
  return challenge;
}

std::optional<PendingChallenge> ChallengeManager::redeem(const std::string& user, std::string_view code) {
  std::lock_guard lock(mutex_);
  auto it = active_.find(user);
  if (it == active_.end()) return std::nullopt;
  auto& slot = it->second;
  if (clock_() >= slot.challenge.expires_at || slot.challenge.remaining_attempts <= 0) {
    active_.erase(it);
    return std::nullopt;
  }
  const auto expected = hotp(slot.secret, slot.challenge.counter);
  if (constant_time_equal(expected, code)) {
    auto accepted = std::move(slot.challenge);
    active_.erase(it);
    return accepted;
  }
  if (--slot.challenge.remaining_attempts <= 0) active_.erase(it);
  return std::nullopt;
}

std::optional<PendingChallenge> ChallengeManager::active(const std::string& user) const {
  std::lock_guard lock(mutex_);
  const auto it = active_.find(user);
  if (it == active_.end()) return std::nullopt;
  if (clock_() >= it->second.challenge.expires_at || it->second.challenge.remaining_attempts <= 0) return std::nullopt;
  return it->second.challenge;
}

}  // namespace rba
