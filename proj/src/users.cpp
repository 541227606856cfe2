#include "rba/users.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace rba {

namespace {

bool valid_username(const std::string& name) {
  if (name.empty() || name.size() > 128) return false;
  for (unsigned char c : name) {
    if (c < 0x21 || c == 0x7F) return false;
  }
  return true;
}

}  // namespace

UserDirectory::UserDirectory(PasswordHasher hasher, std::optional<std::filesystem::path> path)
    : hasher_(hasher), path_(std::move(path)), dummy_hash_(hasher_.hash(to_hex(random_bytes(16)))) {
  if (path_ && std::filesystem::exists(*path_)) load();
}

UserRecord UserDirectory::create_user(const std::string& username, const std::string& password,
                                      const std::string& contact) {
  if (!valid_username(username)) throw UserError("invalid username");
  if (password.empty()) throw UserError("password must not be empty");
  auto hash = hasher_.hash(password);

  std::lock_guard lock(mutex_);
  if (id_by_name_.count(username)) throw UserError("username already exists");
  UserRecord r;
  r.id = std::to_string(next_id_++);
  r.username = username;
  r.password_hash = std::move(hash);
  r.contact = contact;
  r.hotp_secret = random_bytes(20);
  id_by_name_[username] = r.id;
  by_id_[r.id] = r;
  persist_locked();
  return r;
}

void UserDirectory::set_contact(const std::string& username, const std::string& contact) {
  std::lock_guard lock(mutex_);
  const auto it = id_by_name_.find(username);
  if (it == id_by_name_.end()) throw UserError("unknown user");
  by_id_[it->second].contact = contact;
  persist_locked();
}

std::optional<UserRecord> UserDirectory::find_by_name(const std::string& username) const {
  std::lock_guard lock(mutex_);
  const auto it = id_by_name_.find(username);
  if (it == id_by_name_.end()) return std::nullopt;
  return by_id_.at(it->second);
}

std::optional<std::string> UserDirectory::check_password(const std::string& username,
                                                         const std::string& password) const {
  const auto record = find_by_name(username);
  if (!record) {
    PasswordHasher::verify(password, dummy_hash_);
    return std::nullopt;
  }
  if (!PasswordHasher::verify(password, record->password_hash)) return std::nullopt;
  return record->id;
}

std::optional<HotpKey> UserDirectory::advance_counter(const std::string& user_id) {
  std::lock_guard lock(mutex_);
  const auto it = by_id_.find(user_id);
  if (it == by_id_.end()) return std::nullopt;
  ++it->second.hotp_counter;
  persist_locked();
  return HotpKey{it->second.hotp_secret, it->second.hotp_counter};
}

std::optional<std::string> UserDirectory::contact(const std::string& user_id) const {
  std::lock_guard lock(mutex_);
  const auto it = by_id_.find(user_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second.contact;
}

std::size_t UserDirectory::size() const {
  std::lock_guard lock(mutex_);
  return by_id_.size();
}

void UserDirectory::persist_locked() const {
  if (!path_) return;
  nlohmann::json doc;
  doc["next_id"] = next_id_;
  doc["users"] = nlohmann::json::array();
  for (const auto& [id, r] : by_id_) {
    doc["users"].push_back({{"id", r.id},
                            {"username", r.username},
                            {"password_hash", r.password_hash},
                            {"contact", r.contact},
                            {"hotp_secret", to_hex(r.hotp_secret)},
                            {"hotp_counter", r.hotp_counter}});
  }
  const auto tmp = path_->string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << doc.dump(2) << "\n";
    out.flush();
    if (!out) throw UserError("cannot write user file " + tmp);
  }
  std::filesystem::rename(tmp, *path_);
}

void UserDirectory::load() {
  std::ifstream in(*path_, std::ios::binary);
  if (!in) throw UserError("cannot read user file " + path_->string());
  try {
    const auto doc = nlohmann::json::parse(in);
    next_id_ = doc.at("next_id").get<std::uint64_t>();
    for (const auto& u : doc.at("users")) {
      UserRecord r;
      r.id = u.at("id").get<std::string>();
      r.username = u.at("username").get<std::string>();
      r.password_hash = u.at("password_hash").get<std::string>();
      r.contact = u.at("contact").get<std::string>();
      r.hotp_secret = from_hex(u.at("hotp_secret").get<std::string>());
      r.hotp_counter = u.at("hotp_counter").get<std::uint64_t>();
      id_by_name_[r.username] = r.id;
      by_id_[r.id] = std::move(r);
    }
  } catch (const std::exception& e) {
    throw UserError("corrupt user file " + path_->string() + ": " + e.what());
  }
}

}  // namespace rba
