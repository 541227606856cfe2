#include "rba/features.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rba/config.hpp"

namespace rba {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string at_line(std::size_t line_no, const std::string& msg) {
  return "line " + std::to_string(line_no) + ": " + msg;
}

std::optional<std::uint32_t> parse_asn(std::string_view s) {
  if (s.size() >= 2 && (s[0] == 'A' || s[0] == 'a') && (s[1] == 'S' || s[1] == 's')) s.remove_prefix(2);
  std::uint32_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

}  // namespace

std::optional<std::int64_t> normalize_rtt(std::span<const double> samples_ms) {
  if (samples_ms.empty()) return std::nullopt;
  for (double s : samples_ms) {
    if (!std::isfinite(s) || s < 0.0) throw ValidationError("RTT samples must be finite and nonnegative");
  }
  const double shortest = *std::min_element(samples_ms.begin(), samples_ms.end());
  return static_cast<std::int64_t>(std::round(shortest / 10.0)) * 10;
}

PrefixTableResolver::PrefixTableResolver(std::span<const Row> rows) {
  for (const auto& row : rows) trie_.insert(row.prefix, IpInfo{row.asn, row.country});
}

PrefixTableResolver PrefixTableResolver::parse_csv(std::string_view text) {
  std::vector<Row> rows;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split(line, ',');
    if (cols.size() != 3) throw ValidationError(at_line(line_no, "expected cidr,asn,country"));
    const auto cidr = trim(cols[0]);
    if (line_no == 1 && cidr == "cidr") continue;
    const auto prefix = IpPrefix::parse(cidr);
    if (!prefix) throw ValidationError(at_line(line_no, "malformed CIDR '" + cidr + "'"));
    const auto asn = parse_asn(trim(cols[1]));
    if (!asn) throw ValidationError(at_line(line_no, "malformed ASN '" + trim(cols[1]) + "'"));
    auto country = trim(cols[2]);
    if (country.size() != 2 || !std::isalpha(static_cast<unsigned char>(country[0])) ||
        !std::isalpha(static_cast<unsigned char>(country[1]))) {
      throw ValidationError(at_line(line_no, "country must be an ISO 3166-1 alpha-2 code"));
    }
    for (auto& c : country) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    rows.push_back({*prefix, *asn, std::move(country)});
  }
  return PrefixTableResolver(rows);
}

PrefixTableResolver PrefixTableResolver::load_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path));
}

IpInfo PrefixTableResolver::resolve(const IpAddress& ip) const {
  if (const auto* hit = trie_.longest_match(ip)) return *hit;
  return {};
}

UserAgentParser UserAgentParser::parse_rules(std::string_view text) {
  UserAgentParser out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;

    std::vector<std::string> cols;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      const auto tab = line.find('\t', start);
      if (tab == std::string_view::npos) throw ValidationError(at_line(line_no, "expected 4 tab-separated fields"));
      cols.emplace_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    cols.emplace_back(line.substr(start));

    Rule rule;
    if (cols[0] == "browser") {
      rule.kind = Rule::Kind::browser;
    } else if (cols[0] == "os") {
      rule.kind = Rule::Kind::os;
    } else if (cols[0] == "device") {
      rule.kind = Rule::Kind::device;
      if (!device_type_from_string(cols[1])) throw ValidationError(at_line(line_no, "unknown device type"));
    } else {
      throw ValidationError(at_line(line_no, "unknown rule kind '" + cols[0] + "'"));
    }
    rule.name = cols[1];
    rule.version = cols[2];
    rule.pattern = cols[3];
    if (rule.name.empty() || rule.pattern.empty()) throw ValidationError(at_line(line_no, "empty field"));
    try {
      rule.regex = std::regex(rule.pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw ValidationError(at_line(line_no, std::string("bad pattern: ") + e.what()));
    }
    out.rules_.push_back(std::move(rule));
  }
  return out;
}

UserAgentParser UserAgentParser::load_rules(const std::filesystem::path& path) {
  return parse_rules(read_file(path));
}

const UserAgentParser& UserAgentParser::builtin() {
  static const UserAgentParser parser = parse_rules(builtin_rules_text());
  return parser;
}

UserAgentInfo UserAgentParser::parse(std::string_view ua) const {
  UserAgentInfo info;
  if (ua.empty()) return info;
  bool have_browser = false, have_os = false, have_device = false;
  std::match_results<std::string_view::const_iterator> m;

  for (const auto& rule : rules_) {
    const bool wanted = (rule.kind == Rule::Kind::browser && !have_browser) ||
                        (rule.kind == Rule::Kind::os && !have_os) ||
                        (rule.kind == Rule::Kind::device && !have_device);
    if (!wanted || !std::regex_search(ua.begin(), ua.end(), m, rule.regex)) continue;

    std::string version;
    if (rule.version == "$1") {
      for (std::size_t g = 1; g < m.size(); ++g) {
        if (m[g].matched) {
          version = m[g].str();
          break;
        }
      }
      std::replace(version.begin(), version.end(), '_', '.');
    } else if (rule.version != "-") {
      version = rule.version;
    }

    switch (rule.kind) {
      case Rule::Kind::browser:
        if (rule.version == "$1") version = version.substr(0, version.find('.'));
        info.browser = NameVersion{rule.name, version};
        have_browser = true;
        break;
      case Rule::Kind::os:
        info.os = NameVersion{rule.name, version};
        have_os = true;
        break;
      case Rule::Kind::device:
        info.device_type = *device_type_from_string(rule.name);
        have_device = true;
        break;
    }
    if (have_browser && have_os && have_device) break;
  }
  return info;
}

NormalizedFeatures validate_and_normalize(const RawLoginAttempt& raw, const IpResolver& resolver,
                                          const UserAgentParser& ua_parser) {
  if (raw.username.empty()) throw ValidationError("username must not be empty");
  const auto ip = IpAddress::parse(raw.ip);
  if (!ip) throw ValidationError("invalid IP address '" + raw.ip + "'");
  if (raw.rtt_samples_ms.size() > 5) throw ValidationError("at most five RTT samples are accepted");

  NormalizedFeatures out;
  out.ip = *ip;
  const auto info = resolver.resolve(*ip);
  out.asn = info.asn;
  out.country = info.country;
  out.ua_full = raw.ua;
  const auto ua = ua_parser.parse(raw.ua);
  out.browser = ua.browser;
  out.os = ua.os;
  out.device_type = ua.device_type;
  out.rtt_ms = normalize_rtt(raw.rtt_samples_ms);
  return out;
}

}  // namespace rba
