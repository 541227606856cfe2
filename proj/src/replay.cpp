#include "rba/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "rba/config.hpp"
#include "rba/csv.hpp"

namespace rba {

namespace {

struct ColumnRef {
  std::string ColumnMapping::*member;
  const char* key;
  bool required;
};

constexpr ColumnRef kColumns[] = {
    {&ColumnMapping::index, "index", false},
    {&ColumnMapping::timestamp, "timestamp", false},
    {&ColumnMapping::user_id, "user_id", true},
    {&ColumnMapping::rtt, "rtt", false},
    {&ColumnMapping::ip, "ip", true},
    {&ColumnMapping::country, "country", true},
    {&ColumnMapping::asn, "asn", true},
    {&ColumnMapping::ua, "ua", true},
    {&ColumnMapping::browser, "browser", true},
    {&ColumnMapping::os, "os", true},
    {&ColumnMapping::device_type, "device_type", true},
    {&ColumnMapping::success, "success", true},
};

std::optional<bool> parse_flag(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "true" || lower == "1") return true;
  if (lower == "false" || lower == "0") return false;
  return std::nullopt;
}

std::optional<std::string> cell(const std::vector<std::string>& record, std::optional<std::size_t> column) {
  if (!column) return std::nullopt;
  const auto& v = record[*column];
  if (v.empty()) return std::nullopt;
  return v;
}

std::string format_score(const RiskScore& s) {
  if (s.is_infinite()) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", s.value);
  return buf;
}

}  // namespace

ColumnMapping ColumnMapping::from_entries(std::map<std::string, std::string> entries) {
  ColumnMapping m;
  for (const auto& col : kColumns) {
    auto it = entries.find(col.key);
    if (it == entries.end()) continue;
    if (it->second.empty() && col.required) throw DatasetError(std::string("column mapping: ") + col.key + " is required");
    m.*col.member = it->second;
    m.explicit_keys.insert(col.key);
    entries.erase(it);
  }
  try {
    reject_unknown_keys(entries);
  } catch (const ConfigError& e) {
    throw DatasetError(std::string("column mapping: ") + e.what());
  }
  return m;
}

ColumnMapping ColumnMapping::load(const std::filesystem::path& path) {
  try {
    return from_entries(load_key_values(path));
  } catch (const ConfigError& e) {
    throw DatasetError(std::string("column mapping: ") + e.what());
  }
}

std::vector<DatasetRow> load_dataset(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  return parse_dataset(in, mapping);
}

std::vector<DatasetRow> parse_dataset(std::istream& in, const ColumnMapping& mapping) {
  CsvReader reader(in);
  std::optional<std::vector<std::string>> header;
  try {
    header = reader.next();
  } catch (const CsvError& e) {
    throw DatasetError(e.what());
  }
  if (!header) throw DatasetError("dataset is empty (no header row)");
  if (!header->empty() && header->front().rfind("\xEF\xBB\xBF", 0) == 0) header->front().erase(0, 3);

  std::unordered_map<std::string, std::optional<std::size_t>> columns;
  for (const auto& col : kColumns) {
    const auto& name = mapping.*col.member;
    std::optional<std::size_t> pos;
    if (!name.empty()) {
      const auto it = std::find(header->begin(), header->end(), name);
      if (it != header->end()) pos = static_cast<std::size_t>(it - header->begin());
    }
    const bool needed = col.required || (mapping.explicit_keys.count(col.key) && !name.empty());
    if (!pos && needed) throw DatasetError("missing column '" + name + "' (mapped as " + col.key + ")");
    columns[col.key] = pos;
  }

  std::vector<DatasetRow> rows;
  std::uint64_t position = 0;
  while (true) {
    std::optional<std::vector<std::string>> record;
    try {
      record = reader.next();
    } catch (const CsvError& e) {
      throw DatasetError(e.what());
    }
    if (!record) break;
    const auto row_no = reader.record_number();
    if (record->size() == 1 && record->front().empty()) continue;  // blank line
    if (record->size() != header->size()) {
      throw DatasetError("row " + std::to_string(row_no) + ": expected " + std::to_string(header->size()) +
                         " fields, got " + std::to_string(record->size()));
    }

    DatasetRow row;
    row.global_index = position++;
    if (auto idx = cell(*record, columns["index"])) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(idx->data(), idx->data() + idx->size(), v);
      if (ec != std::errc{} || ptr != idx->data() + idx->size()) {
        throw DatasetError("row " + std::to_string(row_no) + ": bad index '" + *idx + "'");
      }
      row.global_index = v;
    }
    const auto user = cell(*record, columns["user_id"]);
    if (!user) throw DatasetError("row " + std::to_string(row_no) + ": empty user id");
    row.user = *user;
    row.timestamp = cell(*record, columns["timestamp"]).value_or("");
    const auto flag = parse_flag((*record)[*columns["success"]]);
    if (!flag) throw DatasetError("row " + std::to_string(row_no) + ": bad login-success flag");
    row.success = *flag;

    at(row.values, Level::ip) = cell(*record, columns["ip"]);
    at(row.values, Level::asn) = cell(*record, columns["asn"]);
    at(row.values, Level::country) = cell(*record, columns["country"]);
    at(row.values, Level::ua_full) = cell(*record, columns["ua"]);
    at(row.values, Level::browser) = cell(*record, columns["browser"]);
    at(row.values, Level::os) = cell(*record, columns["os"]);
    at(row.values, Level::device_type) = cell(*record, columns["device_type"]);
    at(row.values, Level::rtt) = cell(*record, columns["rtt"]);
    if (row.success) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ScoreRow> replay(std::span<const DatasetRow> rows, const RiskEngine& engine,
                             const ReplayOptions& options) {
  std::vector<ScoreRow> out;
  if (options.start >= rows.size()) return out;
  const std::size_t end = options.start + std::min(options.count, rows.size() - options.start);

  std::unordered_map<std::string, std::vector<LoginHistoryEntry>> histories;
  GlobalCounters counters;
  std::uint64_t seq = 0;

  for (std::size_t i = 0; i < end; ++i) {
    const auto& row = rows[i];
    auto& history = histories[row.user];
    if (i >= options.start && !history.empty()) {
      out.push_back({row.global_index, row.user, engine.score(row.values, row.user, history, counters)});
    }
    history.push_back({row.user, 0, row.values, ++seq});
    counters.add(row.user, row.values);
    if (options.history_cap && history.size() > *options.history_cap) {
      counters.remove(row.user, history.front().values);
      history.erase(history.begin());
    }
  }
  return out;
}

std::vector<Slice> shard(std::size_t start, std::size_t count, std::size_t n_shards) {
  if (n_shards == 0) throw std::invalid_argument("shard: need at least one shard");
  std::vector<Slice> out;
  const std::size_t base = count / n_shards;
  const std::size_t extra = count % n_shards;
  std::size_t at_row = start;
  for (std::size_t i = 0; i < n_shards; ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    out.push_back({at_row, size});
    at_row += size;
  }
  return out;
}

std::vector<ScoreRow> replay_sharded(std::span<const DatasetRow> rows, const RiskEngine& engine,
                                     const ReplayOptions& options, std::size_t n_shards, std::size_t threads) {
  const std::size_t start = std::min(options.start, rows.size());
  const std::size_t count = std::min(options.count, rows.size() - start);
  const auto slices = shard(start, count, n_shards);
  std::vector<std::vector<ScoreRow>> parts(slices.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < slices.size();) {
      ReplayOptions o = options;
      o.start = slices[i].start;
      o.count = slices[i].count;
      if (o.count) parts[i] = replay(rows, engine, o);
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(threads, 1); ++t) pool.emplace_back(work);
  work();
  pool.clear();

  std::vector<ScoreRow> out;
  for (auto& p : parts) out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  return out;
}

std::string format_scores(std::span<const ScoreRow> scores) {
  std::string out = "global_index,user_id,risk_score\n";
  for (const auto& s : scores) {
    out += std::to_string(s.global_index) + "," + csv_escape(s.user) + "," + format_score(s.score) + "\n";
  }
  return out;
}

std::vector<ScoreRow> parse_scores(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.next();
  if (!header || header->size() != 3 || (*header)[0] != "global_index") {
    throw DatasetError("score file: missing 'global_index,user_id,risk_score' header");
  }
  std::vector<ScoreRow> out;
  while (auto record = reader.next()) {
    const auto row_no = reader.record_number();
    if (record->size() == 1 && record->front().empty()) continue;
    if (record->size() != 3) throw DatasetError("score file row " + std::to_string(row_no) + ": expected 3 fields");
    ScoreRow r;
    const auto& idx = (*record)[0];
    const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), r.global_index);
    if (idx.empty() || ec != std::errc{} || ptr != idx.data() + idx.size()) {
      throw DatasetError("score file row " + std::to_string(row_no) + ": bad index");
    }
    r.user = (*record)[1];
    try {
      r.score.value = parse_double("risk_score", (*record)[2]);
    } catch (const ConfigError&) {
      throw DatasetError("score file row " + std::to_string(row_no) + ": bad score");
    }
    out.push_back(std::move(r));
  }
  return out;
}

CompareReport compare(std::span<const ScoreRow> a, std::span<const ScoreRow> b, double tol) {
  CompareReport report;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].global_index != b[i].global_index) {
      report.structural = "row " + std::to_string(i + 1) + ": global index " + std::to_string(a[i].global_index) +
                          " vs " + std::to_string(b[i].global_index);
      return report;
    }
    ++report.rows;
    const double x = a[i].score.value, y = b[i].score.value;
    if (x == y) continue;  // covers matching infinities
    const double abs_diff = std::abs(x - y);
    const double scale = std::max(std::abs(x), std::abs(y));
    const double rel_diff = scale > 0 ? abs_diff / scale : 0.0;
    report.max_abs_diff = std::max(report.max_abs_diff, abs_diff);
    report.max_rel_diff = std::max(report.max_rel_diff, rel_diff);
    if (!(abs_diff <= tol) && !report.first_mismatch) report.first_mismatch = a[i].global_index;
  }
  if (a.size() != b.size()) {
    report.structural = "row count differs: " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
  }
  return report;
}

}  // namespace rba
