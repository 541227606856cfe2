#include "rba/reputation.hpp"

#include <curl/curl.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "rba/config.hpp"

namespace rba {

ReputationSet ReputationSet::parse_list(std::string_view text, std::string location) {
  ReputationSet out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto prefix = IpPrefix::parse(line);
    if (!prefix) throw ReputationParseError(line_no, "not an IP address or CIDR: '" + line + "'");
    out.insert(*prefix);
  }
  out.source_ = {std::move(location), std::chrono::system_clock::now()};
  return out;
}

namespace {

std::size_t collect_body(char* data, std::size_t size, std::size_t n, void* user) {
  static_cast<std::string*>(user)->append(data, size * n);
  return size * n;
}

}  // namespace

std::string fetch_list_text(const std::string& location) {
  if (location.rfind("http://", 0) == 0 || location.rfind("https://", 0) == 0) {
    std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
    if (!curl) throw ReputationFetchError("curl initialisation failed");
    std::string body;
    curl_easy_setopt(curl.get(), CURLOPT_URL, location.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT, 60L);
    curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, collect_body);
    curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &body);
    const auto rc = curl_easy_perform(curl.get());
    if (rc != CURLE_OK) throw ReputationFetchError(location + ": " + curl_easy_strerror(rc));
    return body;
  }
  std::ifstream in(location, std::ios::binary);
  if (!in) throw ReputationFetchError("cannot open " + location);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ReputationFetchError("read error on " + location);
  return ss.str();
}

ReputationFeed::ReputationFeed(std::string location, Fetcher fetcher)
    : location_(std::move(location)),
      fetcher_(std::move(fetcher)),
      active_(std::make_shared<const ReputationSet>()) {}

ReputationFeed::~ReputationFeed() { stop(); }

std::shared_ptr<const ReputationSet> ReputationFeed::active() const {
  std::lock_guard lock(mutex_);
  return active_;
}

bool ReputationFeed::refresh(const std::string& location) {
  std::lock_guard serial(refresh_mutex_);
  const auto& where = location.empty() ? location_ : location;
  if (where.empty()) {
    spdlog::warn("reputation refresh skipped: no source configured");
    return false;
  }
  try {
    auto next = std::make_shared<const ReputationSet>(ReputationSet::parse_list(fetcher_(where), where));
    const auto count = next->size();
    {
      std::lock_guard lock(mutex_);
      active_ = std::move(next);
    }
    spdlog::info("reputation list {} loaded: {} prefixes", where, count);
    return true;
  } catch (const std::exception& e) {
    spdlog::error("reputation refresh from {} failed, keeping previous list: {}", where, e.what());
    return false;
  }
}

void ReputationFeed::start_periodic(std::chrono::milliseconds interval) {
  stop();
  worker_ = std::jthread([this, interval](std::stop_token token) {
    std::mutex m;
    std::unique_lock lock(m);
    while (!token.stop_requested()) {
      if (wake_.wait_for(lock, token, interval, [] { return false; })) break;
      if (token.stop_requested()) break;
      refresh();
    }
  });
}

void ReputationFeed::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
}

}  // namespace rba
