#pragma once

#include <random>
#include <string>
#include <vector>

#include "rba/replay.hpp"

namespace synthetic {

// Logins for `users` users where each user mostly returns to a small set of
// personal contexts and now and then shows up from a fresh one.
inline std::vector<rba::DatasetRow> dataset(std::uint64_t seed, std::size_t users, std::size_t rows,
                                            double churn = 0.2, double unknown_rate = 0.05) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

  const std::vector<std::string> countries{"DE", "FR", "NO", "US", "BR"};
  const std::vector<std::string> browsers{"Chrome 96", "Firefox 95", "Safari 15", "Edge 96"};
  const std::vector<std::string> oses{"Windows 10", "Mac OS X 10.15", "Android 11", "iOS 15.1"};
  const std::vector<std::string> devices{"desktop", "mobile", "tablet"};

  auto fresh_context = [&](std::size_t id) {
    rba::FeatureValues v;
    const auto asn = 100 + pick(12);
    v[0] = "10." + std::to_string(asn % 256) + "." + std::to_string(pick(4)) + "." + std::to_string(id % 250);
    v[1] = std::to_string(asn);
    v[2] = countries[asn % countries.size()];
    v[4] = browsers[pick(browsers.size())];
    v[5] = oses[pick(oses.size())];
    v[6] = devices[pick(devices.size())];
    v[3] = "Mozilla/5.0 (" + *v[5] + ") " + *v[4] + " build" + std::to_string(pick(3));
    v[7] = std::to_string(10 * (2 + pick(30)));
    return v;
  };

  std::vector<std::vector<rba::FeatureValues>> personal(users);
  std::size_t contexts = 0;
  for (auto& p : personal) {
    for (int i = 0; i < 2; ++i) p.push_back(fresh_context(contexts++));
  }

  std::vector<rba::DatasetRow> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto u = pick(users);
    rba::DatasetRow row;
    row.global_index = i;
    row.user = "u" + std::to_string(u);
    row.timestamp = std::to_string(1600000000 + 60 * i);
    if (chance(churn)) {
      personal[u].push_back(fresh_context(contexts++));
      row.values = personal[u].back();
    } else {
      row.values = personal[u][pick(personal[u].size())];
    }
    // Partial churn: keep the context but vary single sub-features.
    if (chance(churn)) row.values[7] = std::to_string(10 * (2 + pick(30)));
    if (chance(churn / 2)) row.values[0] = "10.99." + std::to_string(pick(256)) + "." + std::to_string(pick(256));
    for (auto& v : row.values) {
      if (chance(unknown_rate)) v.reset();
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace synthetic
