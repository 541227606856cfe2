#pragma once

// Direct evaluation of the risk score by scanning raw login lists. Shares no
// code with the engine: no counters, no feature hierarchy objects.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rba/core.hpp"

namespace oracle {

struct Login {
  std::string user;
  rba::FeatureValues values;
};

struct Weights {
  std::vector<double> ip{0.6, 0.3, 0.1};
  std::vector<double> ua{0.5, 0.25, 0.15, 0.1};
  bool rtt = true;
  double alpha = 1.0;
  double attack_prior = 1.0;
};

inline bool same(const std::optional<std::string>& a, const std::optional<std::string>& b) {
  return a && b && *a == *b;
}

// `prior` holds every stored login (all users); the user's own history is
// the subset with a matching user name.
inline double score(const rba::FeatureValues& attempt, const std::string& user, const std::vector<Login>& prior,
                    const Weights& w) {
  struct Group {
    std::vector<int> columns;
    std::vector<double> weights;
  };
  std::vector<Group> groups{{{0, 1, 2}, w.ip}, {{3, 4, 5, 6}, w.ua}};
  if (w.rtt) groups.push_back({{7}, {1.0}});

  double n_user = 0;
  for (const auto& l : prior) n_user += (l.user == user) ? 1 : 0;
  const double n_all = static_cast<double>(prior.size());

  double s = 1.0;
  for (const auto& g : groups) {
    const auto& origin = attempt[g.columns[0]];
    if (!origin) continue;

    double p_user = 0.0;
    for (std::size_t i = 0; i < g.columns.size(); ++i) {
      double hits = 0;
      for (const auto& l : prior) {
        if (l.user == user && same(l.values[g.columns[i]], attempt[g.columns[i]])) hits += 1;
      }
      p_user += g.weights[i] * hits / n_user;
    }
    if (p_user == 0.0) return std::numeric_limits<double>::infinity();

    double seen = 0;
    for (const auto& l : prior) seen += same(l.values[g.columns[0]], origin) ? 1 : 0;
    const double p_global = (seen + w.alpha) / (n_all + w.alpha);
    s *= p_global / p_user;
  }
  return s * w.attack_prior / (n_user / n_all);
}

inline double relative_error(double a, double b) {
  if (a == b) return 0.0;
  if (std::isinf(a) || std::isinf(b)) return std::numeric_limits<double>::infinity();
  return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b));
}

}  // namespace oracle
