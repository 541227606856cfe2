#include <doctest.h>
#include <sys/resource.h>

#include <atomic>
#include <csignal>
#include <random>
#include <thread>

#include "rba/history.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace rba;

namespace {

LoginHistoryEntry make(std::string ip, std::int64_t ts = 0) {
  LoginHistoryEntry e;
  e.timestamp = ts;
  at(e.values, Level::ip) = std::move(ip);
  at(e.values, Level::country) = "DE";
  return e;
}

std::vector<std::string> ips(const std::vector<LoginHistoryEntry>& h) {
  std::vector<std::string> out;
  for (const auto& e : h) out.push_back(*at(e.values, Level::ip));
  return out;
}

void check_consistent(const HistoryStore& store) {
  const auto snap = store.snapshot();
  CHECK(snap->counters == GlobalCounters::recount(snap->all_entries()));
  for (const auto& [user, h] : snap->users) CHECK(h->size() <= store.history_cap());
}

}  // namespace

TEST_CASE("append evicts the oldest entry at the cap") {
  HistoryStore store(3);
  CHECK(store.user_history("nobody").empty());
  CHECK_FALSE(store.append("u", make("a")));
  CHECK(ips(store.user_history("u")) == std::vector<std::string>{"a"});
  CHECK_FALSE(store.append("u", make("b")));
  CHECK(ips(store.user_history("u")) == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(store.append("u", make("c")));
  const auto evicted = store.append("u", make("d"));
  REQUIRE(evicted);
  CHECK(*at(evicted->values, Level::ip) == "a");
  CHECK(ips(store.user_history("u")) == std::vector<std::string>{"b", "c", "d"});
  CHECK(store.snapshot()->counters.user_count("u") == 3);
  CHECK(store.snapshot()->counters.count(Level::ip, "a") == 0);
  check_consistent(store);
}

TEST_CASE("sequence numbers increase across users") {
  HistoryStore store;
  store.append("a", make("1"));
  store.append("b", make("2"));
  store.append("a", make("3"));
  const auto a = store.user_history("a");
  CHECK(a[0].seq == 1);
  CHECK(a[1].seq == 3);
  CHECK(store.user_history("b")[0].seq == 2);
  CHECK(a[0].user == "a");
  CHECK_THROWS_AS(store.append("", make("x")), ValidationError);
}

TEST_CASE("snapshots are immutable") {
  HistoryStore store(2);
  store.append("u", make("a"));
  const auto before = store.snapshot();
  store.append("u", make("b"));
  store.append("u", make("c"));
  CHECK(before->user_history("u").size() == 1);
  CHECK(before->counters.total() == 1);
  CHECK(store.snapshot()->counters.total() == 2);
}

TEST_CASE("counter removal underflow is a logic error") {
  GlobalCounters c;
  FeatureValues v;
  at(v, Level::ip) = "x";
  CHECK_THROWS_AS(c.remove("u", v), std::logic_error);
}

TEST_CASE("randomized appends keep counters equal to a recount") {
  HistoryStore store(5);
  std::mt19937 rng(17);
  for (int i = 0; i < 2000; ++i) {
    auto e = make(std::to_string(rng() % 30));
    if (rng() % 4 == 0) at(e.values, Level::country).reset();
    store.append("u" + std::to_string(rng() % 12), std::move(e));
    if (i % 97 == 0) check_consistent(store);
  }
  check_consistent(store);
}

TEST_CASE("serialize and parse round trip bit-exactly") {
  HistoryStore store(4);
  for (const auto& r : synthetic::dataset(3, 6, 200)) {
    LoginHistoryEntry e;
    e.timestamp = std::stoll(r.timestamp);
    e.values = r.values;
    store.append(r.user, e);
  }
  auto odd = make("weird\tvalue\\with\nnewline\r");
  at(odd.values, Level::ua_full) = "";
  store.append("user with spaces\t", odd);

  const auto text = HistoryStore::serialize(*store.snapshot());
  const auto parsed = HistoryStore::parse(text, 4);
  CHECK(parsed.all_entries() == store.snapshot()->all_entries());
  CHECK(parsed.counters == store.snapshot()->counters);
  CHECK(HistoryStore::serialize(parsed) == text);
}

TEST_CASE("save and load") {
  testutil::TempDir dir;
  HistoryStore store(3);
  for (int i = 0; i < 10; ++i) store.append("u" + std::to_string(i % 3), make(std::to_string(i), 1000 + i));
  store.save(dir / "h.log");

  HistoryStore loaded(3);
  loaded.load(dir / "h.log");
  CHECK(loaded.snapshot()->all_entries() == store.snapshot()->all_entries());
  CHECK(loaded.snapshot()->counters == GlobalCounters::recount(loaded.snapshot()->all_entries()));
  // New appends continue the sequence.
  loaded.append("u0", make("new"));
  CHECK(loaded.user_history("u0").back().seq == store.snapshot()->next_seq);
}

TEST_CASE("loading a damaged log fails and leaves the store empty") {
  testutil::TempDir dir;
  HistoryStore store;
  for (int i = 0; i < 5; ++i) store.append("u", make(std::to_string(i)));
  store.save(dir / "h.log");
  const auto text = testutil::read_file(dir / "h.log");

  auto expect_failure = [&](const std::string& damaged) {
    testutil::write_file(dir / "bad.log", damaged);
    HistoryStore target;
    target.append("x", make("pre-existing"));
    CHECK_THROWS_AS(target.load(dir / "bad.log"), HistoryLoadError);
    CHECK(target.snapshot()->counters.total() == 0);
    CHECK(target.snapshot()->users.empty());
  };
  expect_failure(text.substr(0, text.size() - 7));
  expect_failure(text.substr(0, text.size() - 1));
  expect_failure("garbage\n");
  expect_failure(text + "Z\tjunk\n");
  expect_failure(text + "X\tnobody\t1\n");
  expect_failure(text + "A\t1\tu\t0\t\\N\t\\N\t\\N\t\\N\t\\N\t\\N\t\\N\t\\N\n");

  HistoryStore missing;
  CHECK_THROWS_AS(missing.load(dir / "absent.log"), HistoryLoadError);
}

TEST_CASE("attached log survives restart and compacts") {
  testutil::TempDir dir;
  const auto log = dir / "history.log";
  {
    HistoryStore store(2);
    store.attach_log(log);
    for (int i = 0; i < 300; ++i) store.append("u" + std::to_string(i % 4), make(std::to_string(i)));
    check_consistent(store);
  }
  // Compaction keeps the log short: live records plus bounded slack.
  const auto text = testutil::read_file(log);
  const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  CHECK(lines < 8 + 1 + 2 * 8 + 64);

  HistoryStore reopened(2);
  reopened.attach_log(log);
  CHECK(reopened.snapshot()->counters.total() == 8);
  CHECK(ips(reopened.user_history("u3")) == std::vector<std::string>{"295", "299"});
  reopened.append("u3", make("300"));
  HistoryStore again(2);
  again.attach_log(log);
  CHECK(ips(again.user_history("u3")) == std::vector<std::string>{"299", "300"});
}

TEST_CASE("a failed log write aborts the append atomically") {
  testutil::TempDir dir;
  const auto log = dir / "history.log";
  HistoryStore store(3);
  store.attach_log(log);
  store.append("u", make("a"));
  store.append("u", make("b"));
  const auto before = store.snapshot();
  const auto size_before = std::filesystem::file_size(log);

  auto* old_handler = std::signal(SIGXFSZ, SIG_IGN);
  rlimit saved{};
  ::getrlimit(RLIMIT_FSIZE, &saved);
  rlimit tight = saved;
  tight.rlim_cur = size_before;
  ::setrlimit(RLIMIT_FSIZE, &tight);

  CHECK_THROWS_AS(store.append("u", make("c")), HistoryIoError);

  ::setrlimit(RLIMIT_FSIZE, &saved);
  std::signal(SIGXFSZ, old_handler);

  CHECK(store.snapshot() == before);
  CHECK(std::filesystem::file_size(log) == size_before);
  store.append("u", make("d"));
  CHECK(ips(store.user_history("u")) == std::vector<std::string>{"a", "b", "d"});

  HistoryStore reopened(3);
  reopened.attach_log(log);
  CHECK(reopened.snapshot()->all_entries() == store.snapshot()->all_entries());
}

TEST_CASE("readers only observe committed states") {
  HistoryStore store(10);
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!done) {
      const auto snap = store.snapshot();
      std::uint64_t sum = 0;
      for (const auto& [u, h] : snap->users) sum += h->size();
      if (sum != snap->counters.total()) ++bad;
    }
  });
  for (int i = 0; i < 3000; ++i) store.append("u" + std::to_string(i % 7), make(std::to_string(i % 13)));
  done = true;
  reader.join();
  CHECK(bad == 0);
  check_consistent(store);
}
