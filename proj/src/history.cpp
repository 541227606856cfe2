#include "rba/history.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <system_error>

#include "rba/config.hpp"

namespace rba {

namespace {

constexpr std::string_view kLogHeader = "#rba-history v1";

void bump(std::unordered_map<std::string, std::uint64_t>& map, const std::string& key) { ++map[key]; }

void drop(std::unordered_map<std::string, std::uint64_t>& map, const std::string& key) {
  auto it = map.find(key);
  if (it == map.end()) throw std::logic_error("counter underflow for '" + key + "'");
  if (--it->second == 0) map.erase(it);
}

void append_escaped(std::string& out, std::string_view field) {
  for (char c : field) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
}

void append_value(std::string& out, const std::optional<std::string>& value) {
  if (value) {
    append_escaped(out, *value);
  } else {
    out += "\\N";
  }
}

std::optional<std::string> unescape(std::string_view field, std::size_t line_no) {
  if (field == "\\N") return std::nullopt;
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\') {
      out += field[i];
      continue;
    }
    if (++i == field.size()) throw HistoryLoadError("line " + std::to_string(line_no) + ": dangling escape");
    switch (field[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw HistoryLoadError("line " + std::to_string(line_no) + ": bad escape");
    }
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line_no) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw HistoryLoadError("line " + std::to_string(line_no) + ": bad integer '" + std::string(s) + "'");
  }
  return out;
}

std::string append_record(const LoginHistoryEntry& e) {
  std::string line = "A\t" + std::to_string(e.seq) + "\t";
  append_escaped(line, e.user);
  line += "\t" + std::to_string(e.timestamp);
  for (const auto& v : e.values) {
    line += '\t';
    append_value(line, v);
  }
  line += '\n';
  return line;
}

std::string evict_record(const LoginHistoryEntry& e) {
  std::string line = "X\t";
  append_escaped(line, e.user);
  line += "\t" + std::to_string(e.seq) + "\n";
  return line;
}

// Applies one append to a mutable state copy and returns the evicted entry.
std::optional<LoginHistoryEntry> apply_append(HistoryState& state, LoginHistoryEntry entry, std::size_t cap) {
  auto& slot = state.users[entry.user];
  auto entries = slot ? std::vector<LoginHistoryEntry>(*slot) : std::vector<LoginHistoryEntry>{};
  state.counters.add(entry.user, entry.values);
  state.next_seq = std::max(state.next_seq, entry.seq + 1);
  entries.push_back(std::move(entry));
  std::optional<LoginHistoryEntry> evicted;
  if (entries.size() > cap) {
    evicted = std::move(entries.front());
    entries.erase(entries.begin());
    state.counters.remove(evicted->user, evicted->values);
  }
  slot = std::make_shared<const std::vector<LoginHistoryEntry>>(std::move(entries));
  return evicted;
}

}  // namespace

void GlobalCounters::add(const std::string& user, const FeatureValues& values) {
  for (std::size_t i = 0; i < kLevelCount; ++i) {
    if (values[i]) bump(values_[i], *values[i]);
  }
  bump(users_, user);
  ++total_;
}

void GlobalCounters::remove(const std::string& user, const FeatureValues& values) {
  for (std::size_t i = 0; i < kLevelCount; ++i) {
    if (values[i]) drop(values_[i], *values[i]);
  }
  drop(users_, user);
  --total_;
}

std::uint64_t GlobalCounters::count(Level level, const std::string& value) const {
  const auto& map = values_[static_cast<std::size_t>(level)];
  const auto it = map.find(value);
  return it == map.end() ? 0 : it->second;
}

std::uint64_t GlobalCounters::user_count(const std::string& user) const {
  const auto it = users_.find(user);
  return it == users_.end() ? 0 : it->second;
}

GlobalCounters GlobalCounters::recount(std::span<const LoginHistoryEntry> entries) {
  GlobalCounters out;
  for (const auto& e : entries) out.add(e.user, e.values);
  return out;
}

std::span<const LoginHistoryEntry> HistoryState::user_history(const std::string& user) const {
  const auto it = users.find(user);
  if (it == users.end() || !it->second) return {};
  return *it->second;
}

std::vector<LoginHistoryEntry> HistoryState::all_entries() const {
  std::vector<LoginHistoryEntry> out;
  for (const auto& [user, entries] : users) out.insert(out.end(), entries->begin(), entries->end());
  return out;
}

HistoryStore::HistoryStore(std::size_t history_cap)
    : cap_(history_cap), state_(std::make_shared<const HistoryState>()) {
  if (cap_ == 0) throw ConfigError("history_cap must be positive");
}

HistoryStore::~HistoryStore() = default;

HistorySnapshot HistoryStore::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return state_;
}

void HistoryStore::publish(std::shared_ptr<const HistoryState> next) {
  std::lock_guard lock(snapshot_mutex_);
  state_ = std::move(next);
}

std::vector<LoginHistoryEntry> HistoryStore::user_history(const std::string& user) const {
  const auto snap = snapshot();
  const auto span = snap->user_history(user);
  return {span.begin(), span.end()};
}

void HistoryStore::write_log_lines(const std::string& lines) {
  if (!log_path_) return;
  std::error_code ec;
  const auto committed = std::filesystem::file_size(*log_path_, ec);
  log_.write(lines.data(), static_cast<std::streamsize>(lines.size()));
  log_.flush();
  if (!log_) {
    // Drop whatever part of the record reached the file.
    log_.close();
    if (!ec) std::filesystem::resize_file(*log_path_, committed, ec);
    log_.clear();
    log_.open(*log_path_, std::ios::binary | std::ios::app);
    throw HistoryIoError("failed to write history log " + log_path_->string());
  }
}

std::optional<LoginHistoryEntry> HistoryStore::append(const std::string& user, LoginHistoryEntry entry) {
  if (user.empty()) throw ValidationError("history user must not be empty");
  std::lock_guard writer(writer_mutex_);
  const auto current = snapshot();
  auto next = std::make_shared<HistoryState>(*current);
  entry.user = user;
  entry.seq = next->next_seq;
  const auto record = append_record(entry);
  auto evicted = apply_append(*next, std::move(entry), cap_);

  if (log_path_) {
    write_log_lines(evicted ? record + evict_record(*evicted) : record);
    log_records_ += evicted ? 2 : 1;
  }
  publish(std::move(next));

  if (log_path_ && log_records_ > 64 && log_records_ > 2 * snapshot()->counters.total()) {
    try {
      compact_locked();
    } catch (const HistoryIoError&) {
      // The uncompacted log is still complete; retry on a later append.
    }
  }
  return evicted;
}

std::string HistoryStore::serialize(const HistoryState& state) {
  auto entries = state.all_entries();
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
  std::string out(kLogHeader);
  out += '\n';
  for (const auto& e : entries) out += append_record(e);
  return out;
}

HistoryState HistoryStore::parse(std::string_view text, std::size_t history_cap) {
  if (!text.empty() && text.back() != '\n') throw HistoryLoadError("truncated history log (no final newline)");
  const auto lines = split(text, '\n');
  if (lines.empty() || lines.front() != kLogHeader) throw HistoryLoadError("missing history log header");

  HistoryState state;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto cols = split(lines[i], '\t');
    if (cols.empty() || cols[0].empty()) throw HistoryLoadError("line " + std::to_string(line_no) + ": empty record");
    if (cols[0] == "A") {
      if (cols.size() != 4 + kLevelCount) {
        throw HistoryLoadError("line " + std::to_string(line_no) + ": wrong field count");
      }
      LoginHistoryEntry e;
      e.seq = parse_int<std::uint64_t>(cols[1], line_no);
      const auto user = unescape(cols[2], line_no);
      if (!user || user->empty()) throw HistoryLoadError("line " + std::to_string(line_no) + ": missing user");
      e.user = *user;
      e.timestamp = parse_int<std::int64_t>(cols[3], line_no);
      for (std::size_t l = 0; l < kLevelCount; ++l) e.values[l] = unescape(cols[4 + l], line_no);
      if (e.seq < state.next_seq) {
        throw HistoryLoadError("line " + std::to_string(line_no) + ": sequence number not increasing");
      }
      apply_append(state, std::move(e), history_cap);
    } else if (cols[0] == "X") {
      if (cols.size() != 3) throw HistoryLoadError("line " + std::to_string(line_no) + ": wrong field count");
      const auto user = unescape(cols[1], line_no);
      const auto seq = parse_int<std::uint64_t>(cols[2], line_no);
      auto it = user ? state.users.find(*user) : state.users.end();
      if (it == state.users.end()) {
        throw HistoryLoadError("line " + std::to_string(line_no) + ": eviction for unknown user");
      }
      auto entries = std::vector<LoginHistoryEntry>(*it->second);
      const auto victim = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.seq == seq; });
      // An eviction already applied by a smaller cap during load is fine.
      if (victim == entries.end()) continue;
      state.counters.remove(victim->user, victim->values);
      entries.erase(victim);
      if (entries.empty()) {
        state.users.erase(it);
      } else {
        it->second = std::make_shared<const std::vector<LoginHistoryEntry>>(std::move(entries));
      }
    } else {
      throw HistoryLoadError("line " + std::to_string(line_no) + ": unknown record type");
    }
  }
  return state;
}

void HistoryStore::save(const std::filesystem::path& path) const {
  const auto text = serialize(*snapshot());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw HistoryIoError("failed to write " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw HistoryIoError("failed to replace " + path.string() + ": " + ec.message());
}

void HistoryStore::load(const std::filesystem::path& path) {
  std::lock_guard writer(writer_mutex_);
  publish(std::make_shared<const HistoryState>());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HistoryLoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto state = parse(ss.str(), cap_);
  log_records_ = static_cast<std::size_t>(state.counters.total());
  publish(std::make_shared<const HistoryState>(std::move(state)));
}

void HistoryStore::attach_log(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) load(path);
  std::lock_guard writer(writer_mutex_);
  log_path_ = path;
  compact_locked();
}

void HistoryStore::compact() {
  std::lock_guard writer(writer_mutex_);
  compact_locked();
}

void HistoryStore::compact_locked() {
  if (!log_path_) return;
  log_.close();
  try {
    save(*log_path_);
  } catch (...) {
    log_.clear();
    log_.open(*log_path_, std::ios::binary | std::ios::app);
    throw;
  }
  log_.clear();
  log_.open(*log_path_, std::ios::binary | std::ios::app);
  if (!log_) throw HistoryIoError("cannot open history log " + log_path_->string());
  log_records_ = static_cast<std::size_t>(snapshot()->counters.total());
}

}  // namespace rba
