#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "rba/crypto.hpp"
#include "rba/verification.hpp"

namespace rba {

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UserRecord {
  std::string id;  // stable key for history and challenges
  std::string username;
  std::string password_hash;
  std::string contact;
  Bytes hotp_secret;
  std::uint64_t hotp_counter = 0;
};

/// Account records, optionally persisted as JSON (rewritten atomically on
/// every change). Implements the HOTP keyring for challenges, keyed by id.
class UserDirectory final : public HotpKeyring {
public:
  explicit UserDirectory(PasswordHasher hasher = {}, std::optional<std::filesystem::path> path = std::nullopt);

  /// Throws UserError on duplicate or invalid usernames and empty passwords.
  UserRecord create_user(const std::string& username, const std::string& password, const std::string& contact);
  void set_contact(const std::string& username, const std::string& contact);

  std::optional<UserRecord> find_by_name(const std::string& username) const;

  /// Id of the user when the password matches. Unknown usernames still pay
  /// for one hash so both failures take similar time.
  std::optional<std::string> check_password(const std::string& username, const std::string& password) const;

  std::optional<HotpKey> advance_counter(const std::string& user_id) override;
  std::optional<std::string> contact(const std::string& user_id) const override;

  std::size_t size() const;

private:
  void persist_locked() const;
  void load();

  PasswordHasher hasher_;
  std::optional<std::filesystem::path> path_;
  std::string dummy_hash_;
  mutable std::mutex mutex_;
  std::map<std::string, UserRecord> by_id_;
  std::map<std::string, std::string> id_by_name_;
  std::uint64_t next_id_ = 1;
};

}  // namespace rba
