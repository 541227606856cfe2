#include "rba/auth_service.hpp"

#include <spdlog/spdlog.h>

#include <json.hpp>

namespace rba {

namespace {

Clock default_clock(Clock clock) {
  if (clock) return clock;
  return [] { return std::chrono::system_clock::now(); };
}

std::int64_t unix_seconds(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
}

}  // namespace

SessionStore::SessionStore(std::chrono::seconds ttl, Clock clock) : ttl_(ttl), clock_(default_clock(std::move(clock))) {}

SessionToken SessionStore::issue(const std::string& user_id) {
  const auto now = clock_();
  SessionToken t{to_hex(random_bytes(32)), user_id, now, now + ttl_};
  std::lock_guard lock(mutex_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    it = it->second.expires_at <= now ? sessions_.erase(it) : std::next(it);
  }
  sessions_[t.token] = t;
  return t;
}

std::optional<SessionToken> SessionStore::validate(const std::string& token) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(token);
  if (it == sessions_.end() || it->second.expires_at <= clock_()) return std::nullopt;
  return it->second;
}

RttRegistry::RttRegistry(std::chrono::seconds ttl, Clock clock) : ttl_(ttl), clock_(default_clock(std::move(clock))) {}

void RttRegistry::purge_locked(std::chrono::system_clock::time_point now) {
  for (auto it = slots_.begin(); it != slots_.end();) {
    it = now - it->second.created >= ttl_ ? slots_.erase(it) : std::next(it);
  }
}

std::string RttRegistry::issue_nonce() {
  auto nonce = to_hex(random_bytes(16));
  const auto now = clock_();
  std::lock_guard lock(mutex_);
  purge_locked(now);
  slots_[nonce] = Slot{now, {}};
  return nonce;
}

bool RttRegistry::record(const std::string& nonce, std::vector<double> samples_ms) {
  std::lock_guard lock(mutex_);
  purge_locked(clock_());
  const auto it = slots_.find(nonce);
  if (it == slots_.end()) return false;
  it->second.samples = std::move(samples_ms);
  return true;
}

std::vector<double> RttRegistry::claim(const std::string& nonce) {
  std::lock_guard lock(mutex_);
  purge_locked(clock_());
  const auto it = slots_.find(nonce);
  if (it == slots_.end()) return {};
  auto samples = std::move(it->second.samples);
  slots_.erase(it);
  return samples;
}

RttProbe::RttProbe() {
  for (auto& p : payloads_) p = to_hex(random_bytes(8));
}

std::string RttProbe::ping(int seq, TimePoint sent_at) {
  if (seq < 0 || seq >= kRounds) throw std::out_of_range("RTT round out of range");
  sent_[static_cast<std::size_t>(seq)] = sent_at;
  return nlohmann::json{{"seq", seq}, {"payload", payloads_[static_cast<std::size_t>(seq)]}}.dump();
}

bool RttProbe::on_echo(std::string_view frame, TimePoint received_at) {
  const auto doc = nlohmann::json::parse(frame, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return false;
  const auto seq_it = doc.find("seq");
  const auto payload_it = doc.find("payload");
  if (seq_it == doc.end() || payload_it == doc.end() || !seq_it->is_number_integer() || !payload_it->is_string()) {
    return false;
  }
  const auto seq = seq_it->get<int>();
  if (seq < 0 || seq >= kRounds) return false;
  const auto i = static_cast<std::size_t>(seq);
  if (!sent_[i] || rtt_ms_[i] || payload_it->get<std::string>() != payloads_[i]) return false;
  rtt_ms_[i] = std::chrono::duration<double, std::milli>(received_at - *sent_[i]).count();
  return true;
}

bool RttProbe::complete() const {
  for (const auto& r : rtt_ms_) {
    if (!r) return false;
  }
  return true;
}

std::vector<double> RttProbe::samples_ms() const {
  std::vector<double> out;
  for (const auto& r : rtt_ms_) {
    if (r) out.push_back(*r);
  }
  return out;
}

std::string AuthResponse::to_json() const {
  nlohmann::json j;
  switch (status) {
    case Status::success:
      j["status"] = "success";
      j["token"] = session->token;
      j["expires_at"] = unix_seconds(session->expires_at);
      break;
    case Status::passcode_required:
      j["status"] = "passcode_required";
      j["message"] = "A verification code was sent to your registered contact address.";
      break;
    case Status::failure:
      j["status"] = "failure";
      j["message"] = "Authentication failed.";
      break;
  }
  return j.dump();
}

AuthService::AuthService(AuthServiceSettings settings, UserDirectory& users, HistoryStore& history,
                         ReputationFeed& reputation, Messenger& messenger, std::shared_ptr<const IpResolver> resolver,
                         const UserAgentParser& ua_parser, Clock clock)
    : settings_(std::move(settings)),
      clock_(default_clock(std::move(clock))),
      users_(users),
      history_(history),
      reputation_(reputation),
      resolver_(std::move(resolver)),
      ua_parser_(ua_parser),
      engine_(settings_.risk),
      challenges_(users_, messenger, settings_.challenge, clock_),
      sessions_(settings_.session_ttl, clock_),
      rtt_(settings_.rtt_nonce_ttl, clock_) {
  if (!resolver_) resolver_ = std::make_shared<PrefixTableResolver>();
}

std::mutex& AuthService::user_lock(const std::string& user_id) {
  return user_locks_[std::hash<std::string>{}(user_id) % user_locks_.size()];
}

void AuthService::set_audit_log(std::ostream* out) {
  std::lock_guard lock(audit_mutex_);
  audit_ = out;
}

void AuthService::audit(const std::string& user, const std::optional<RiskScore>& score, Outcome outcome) {
  nlohmann::json line{{"time", unix_seconds(clock_())}, {"user", user}, {"outcome", to_string(outcome)}};
  if (score && !score->is_infinite()) {
    line["score"] = score->value;
  } else if (score) {
    line["score"] = "inf";
  } else {
    line["score"] = nullptr;
  }
  std::lock_guard lock(audit_mutex_);
  if (audit_) {
    *audit_ << line.dump() << '\n';
    audit_->flush();
  }
}

AuthResponse AuthService::failure(Outcome outcome, std::optional<RiskScore> score) {
  AuthResponse r;
  r.status = AuthResponse::Status::failure;
  r.outcome = outcome;
  r.score = score;
  return r;
}

AuthResponse AuthService::success(const std::string& user_id, const NormalizedFeatures& features,
                                  std::optional<RiskScore> score) {
  LoginHistoryEntry entry;
  entry.timestamp = unix_seconds(clock_());
  entry.values = features.values();
  history_.append(user_id, std::move(entry));
  AuthResponse r;
  r.status = AuthResponse::Status::success;
  r.outcome = Outcome::Success;
  r.score = score;
  r.session = sessions_.issue(user_id);
  return r;
}

AuthResponse AuthService::authenticate(const AuthRequest& request) {
  RawLoginAttempt raw;
  raw.username = request.username;
  raw.password = request.password;
  raw.ip = request.ip;
  raw.ua = request.ua;
  raw.rtt_samples_ms = request.rtt_nonce ? rtt_.claim(*request.rtt_nonce) : request.rtt_samples_ms;
  if (raw.rtt_samples_ms.size() > RttProbe::kRounds) raw.rtt_samples_ms.resize(RttProbe::kRounds);
  const auto features = validate_and_normalize(raw, *resolver_, ua_parser_);

  const auto user_id = users_.check_password(request.username, request.password);
  if (!user_id) {
    audit(request.username, std::nullopt, Outcome::WrongCredentials);
    return failure(Outcome::WrongCredentials);
  }

  std::lock_guard per_user(user_lock(*user_id));
  try {
    const auto reputation = reputation_.active();
    const auto snapshot = history_.snapshot();
    const auto eval = engine_.evaluate(features.values(), *user_id, *snapshot, reputation.get());

    switch (eval.outcome) {
      case Outcome::Success: {
        auto r = success(*user_id, features, eval.score);
        audit(request.username, eval.score, Outcome::Success);
        return r;
      }
      case Outcome::Suspicious: {
        challenges_.issue_challenge(*user_id, features);
        audit(request.username, eval.score, Outcome::Suspicious);
        AuthResponse r;
        r.status = AuthResponse::Status::passcode_required;
        r.outcome = Outcome::Suspicious;
        r.score = eval.score;
        return r;
      }
      case Outcome::Rejected:
      case Outcome::WrongCredentials:
        audit(request.username, eval.score, Outcome::Rejected);
        return failure(Outcome::Rejected, eval.score);
    }
  } catch (const std::exception& e) {
    spdlog::error("authentication for user {} failed internally: {}", *user_id, e.what());
  }
  return failure(Outcome::WrongCredentials);
}

AuthResponse AuthService::verify(const std::string& username, const std::string& passcode) {
  const auto record = users_.find_by_name(username);
  if (!record) return failure(Outcome::WrongCredentials);

  std::lock_guard per_user(user_lock(record->id));
  const auto accepted = challenges_.redeem(record->id, passcode);
  if (!accepted) {
    audit(username, std::nullopt, Outcome::WrongCredentials);
    return failure(Outcome::WrongCredentials);
  }
  try {
    auto r = success(record->id, accepted->features, std::nullopt);
    audit(username, std::nullopt, Outcome::Success);
    return r;
  } catch (const std::exception& e) {
    spdlog::error("verification for user {} failed internally: {}", record->id, e.what());
    return failure(Outcome::WrongCredentials);
  }
}

UserRecord AuthService::create_user(const std::string& username, const std::string& password,
                                    const std::string& contact) {
  return users_.create_user(username, password, contact);
}

void AuthService::set_contact(const std::string& username, const std::string& contact) {
  users_.set_contact(username, contact);
}

bool AuthService::reload_reputation(const std::string& location) { return reputation_.refresh(location); }

std::string AuthService::config_text() const { return settings_.risk.to_text(); }

}  // namespace rba
