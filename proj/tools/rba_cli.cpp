#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "rba/config.hpp"
#include "rba/replay.hpp"
#include "rba/service.hpp"

using namespace rba;

namespace {

struct DatasetArgs {
  std::string dataset;
  std::string config;
  std::string mapping;
  std::size_t start = 0;
  std::optional<std::size_t> count;
  bool rtt = false;
  std::optional<std::size_t> cap;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& a) {
  cmd->add_option("--dataset", a.dataset, "login dataset CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", a.config, "risk configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--mapping", a.mapping, "column mapping file")->check(CLI::ExistingFile);
  cmd->add_option("--start", a.start, "first row to score (0-based)");
  cmd->add_option("--count", a.count, "number of rows to score (default: to the end)");
  cmd->add_flag("--rtt", a.rtt, "include round-trip time in the score");
  cmd->add_option("--cap", a.cap, "per-user history cap (default: uncapped)");
}

// Replay scores IP and UA only unless RTT is asked for on the command line
// or named in the config file.
RiskEngine engine_for(const DatasetArgs& a) {
  std::map<std::string, std::string> entries;
  if (!a.config.empty()) entries = load_key_values(a.config);
  const bool rtt_named = entries.count("use_rtt") > 0;
  auto risk = RiskConfig::from_entries(entries);
  reject_unknown_keys(entries);
  if (!rtt_named) risk.use_rtt = false;
  if (a.rtt) risk.use_rtt = true;
  return RiskEngine(risk);
}

ReplayOptions options_for(const DatasetArgs& a) {
  ReplayOptions o;
  o.start = a.start;
  if (a.count) o.count = *a.count;
  o.history_cap = a.cap;
  return o;
}

std::vector<DatasetRow> rows_for(const DatasetArgs& a) {
  const auto mapping = a.mapping.empty() ? ColumnMapping{} : ColumnMapping::load(a.mapping);
  return load_dataset(a.dataset, mapping);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path);
}

std::vector<ScoreRow> read_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return parse_scores(in);
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-based authentication engine"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  DatasetArgs replay_args;
  std::string replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "score a login dataset against its own history");
  add_dataset_options(replay_cmd, replay_args);
  replay_cmd->add_option("--out", replay_out, "score file (default: stdout)");

  std::string cmp_a, cmp_b;
  double tol = 1e-9;
  auto* compare_cmd = app.add_subcommand("compare", "compare two score files");
  compare_cmd->add_option("--a", cmp_a)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--b", cmp_b)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--tol", tol, "absolute tolerance")->check(CLI::NonNegativeNumber);

  DatasetArgs shard_args;
  std::size_t n_shards = 1;
  std::size_t threads = 0;
  std::string shard_out;
  auto* shard_cmd = app.add_subcommand("shard", "split a replay into contiguous slices");
  add_dataset_options(shard_cmd, shard_args);
  shard_cmd->add_option("--n", n_shards, "number of shards")->required()->check(CLI::PositiveNumber);
  shard_cmd->add_option("--threads", threads, "worker threads (default: hardware concurrency)");
  shard_cmd->add_option("--out", shard_out, "replay every shard and write the concatenated scores here");

  std::optional<std::string> serve_config;
  auto* serve_cmd = app.add_subcommand("serve", "run the authentication service");
  serve_cmd->add_option("--config", serve_config, "service configuration (default: $RBA_CONFIG)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*replay_cmd) {
      const auto rows = rows_for(replay_args);
      const auto scores = replay(rows, engine_for(replay_args), options_for(replay_args));
      write_output(replay_out, format_scores(scores));
      spdlog::info("scored {} of {} rows", scores.size(), rows.size());
      return 0;
    }

    if (*compare_cmd) {
      const auto report = compare(read_scores(cmp_a), read_scores(cmp_b), tol);
      std::cout << "rows: " << report.rows << "\n"
                << "max_abs_diff: " << report.max_abs_diff << "\n"
                << "max_rel_diff: " << report.max_rel_diff << "\n";
      if (report.structural) std::cout << "structural mismatch: " << *report.structural << "\n";
      if (report.first_mismatch) std::cout << "first mismatch at global index " << *report.first_mismatch << "\n";
      return report.ok() ? 0 : 1;
    }

    if (*shard_cmd) {
      const auto rows = rows_for(shard_args);
      const auto opts = options_for(shard_args);
      const std::size_t begin = std::min(opts.start, rows.size());
      const std::size_t count = std::min(opts.count, rows.size() - begin);
      for (const auto& s : shard(begin, count, n_shards)) std::cout << s.start << "," << s.count << "\n";
      if (!shard_out.empty()) {
        if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
        const auto scores = replay_sharded(rows, engine_for(shard_args), opts, n_shards, threads);
        write_output(shard_out, format_scores(scores));
      }
      return 0;
    }

    const auto path = ServiceConfig::locate(serve_config ? std::optional<std::filesystem::path>(*serve_config)
                                                         : std::nullopt);
    auto config = path ? ServiceConfig::load(*path) : ServiceConfig{};
    ServiceRuntime runtime(std::move(config));
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    runtime.start();
    spdlog::info("listening on {}:{}", runtime.config().bind_address, runtime.port());
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    spdlog::info("shutting down");
    runtime.stop();
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
