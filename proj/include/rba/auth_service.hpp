#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rba/core.hpp"
#include "rba/features.hpp"
#include "rba/history.hpp"
#include "rba/reputation.hpp"
#include "rba/risk_engine.hpp"
#include "rba/users.hpp"
#include "rba/verification.hpp"

namespace rba {

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct SessionToken {
  std::string token;  // 256-bit CSPRNG value, hex encoded
  std::string user_id;
  std::chrono::system_clock::time_point issued_at;
  std::chrono::system_clock::time_point expires_at;
};

class SessionStore {
public:
  SessionStore(std::chrono::seconds ttl, Clock clock);
  SessionToken issue(const std::string& user_id);
  std::optional<SessionToken> validate(const std::string& token) const;

private:
  std::chrono::seconds ttl_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, SessionToken> sessions_;
};

/// Short-lived nonces that tie an RTT measurement channel to the login
/// request that follows it.
class RttRegistry {
public:
  RttRegistry(std::chrono::seconds ttl, Clock clock);

  std::string issue_nonce();
  /// False for unknown or expired nonces.
  bool record(const std::string& nonce, std::vector<double> samples_ms);
  /// Samples recorded under the nonce, consumed; empty if none.
  std::vector<double> claim(const std::string& nonce);

private:
  struct Slot {
    std::chrono::system_clock::time_point created;
    std::vector<double> samples;
  };
  void purge_locked(std::chrono::system_clock::time_point now);

  std::chrono::seconds ttl_;
  Clock clock_;
  std::mutex mutex_;
  std::map<std::string, Slot> slots_;
};

/// Server side of one RTT measurement: five sequenced pings, echoes matched
/// by sequence id in any order. Frames are JSON `{"seq":N,"payload":"..."}`
/// and the client returns each frame verbatim.
class RttProbe {
public:
  using TimePoint = std::chrono::steady_clock::time_point;
  static constexpr int kRounds = 5;

  RttProbe();

  /// Frame for round `seq` (0-based), stamping its send time.
  std::string ping(int seq, TimePoint sent_at);
  /// False for unknown, duplicate or altered frames.
  bool on_echo(std::string_view frame, TimePoint received_at);

  bool complete() const;
  /// Round-trip times in milliseconds, one per echoed round.
  std::vector<double> samples_ms() const;

private:
  std::array<std::string, kRounds> payloads_;
  std::array<std::optional<TimePoint>, kRounds> sent_;
  std::array<std::optional<double>, kRounds> rtt_ms_;
};

struct AuthRequest {
  std::string username;
  std::string password;
  std::string ip;  // from the transport
  std::string ua;  // from the transport
  std::optional<std::string> rtt_nonce;
  std::vector<double> rtt_samples_ms;  // used when no nonce is given
};

struct AuthResponse {
  enum class Status { success, passcode_required, failure };
  Status status = Status::failure;
  std::optional<SessionToken> session;
  // Internal only; never serialized to clients.
  Outcome outcome = Outcome::WrongCredentials;
  std::optional<RiskScore> score;

  /// Client-facing JSON body.
  std::string to_json() const;
};

struct AuthServiceSettings {
  RiskConfig risk;
  std::chrono::seconds session_ttl{3600};
  std::chrono::seconds rtt_nonce_ttl{60};
  ChallengeManager::Settings challenge;
};

/// Transport-independent login flow: credential check, risk evaluation,
/// re-authentication challenge and session issuance.
class AuthService {
public:
  AuthService(AuthServiceSettings settings, UserDirectory& users, HistoryStore& history, ReputationFeed& reputation,
              Messenger& messenger, std::shared_ptr<const IpResolver> resolver,
              const UserAgentParser& ua_parser = UserAgentParser::builtin(), Clock clock = {});

  AuthResponse authenticate(const AuthRequest& request);
  AuthResponse verify(const std::string& username, const std::string& passcode);

  /// Throws ValidationError/UserError on bad input.
  UserRecord create_user(const std::string& username, const std::string& password, const std::string& contact);
  void set_contact(const std::string& username, const std::string& contact);
  bool reload_reputation(const std::string& location = {});
  std::string config_text() const;

  std::optional<SessionToken> validate_session(const std::string& token) const { return sessions_.validate(token); }
  RttRegistry& rtt() { return rtt_; }
  ChallengeManager& challenges() { return challenges_; }

  /// One JSON line per decision: time, user, score, outcome.
  void set_audit_log(std::ostream* out);

private:
  std::mutex& user_lock(const std::string& user_id);
  void audit(const std::string& user, const std::optional<RiskScore>& score, Outcome outcome);
  AuthResponse success(const std::string& user_id, const NormalizedFeatures& features,
                       std::optional<RiskScore> score);
  static AuthResponse failure(Outcome outcome, std::optional<RiskScore> score = std::nullopt);

  AuthServiceSettings settings_;
  Clock clock_;
  UserDirectory& users_;
  HistoryStore& history_;
  ReputationFeed& reputation_;
  std::shared_ptr<const IpResolver> resolver_;
  const UserAgentParser& ua_parser_;
  RiskEngine engine_;
  ChallengeManager challenges_;
  SessionStore sessions_;
  RttRegistry rtt_;

  std::array<std::mutex, 64> user_locks_;
  std::mutex audit_mutex_;
  std::ostream* audit_ = nullptr;
};

}  // namespace rba
