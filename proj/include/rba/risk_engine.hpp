#pragma once

#include <span>
#include <string>
#include <vector>

#include "rba/core.hpp"
#include "rba/history.hpp"
#include "rba/reputation.hpp"

namespace rba {

/// One monitored feature and its granularity levels, most specific first,
/// with one interpolation weight per level.
struct FeatureHierarchy {
  std::string id;
  std::vector<Level> levels;
  std::vector<double> weights;
  bool uses_reputation = false;  // attack data applies to this feature

  Level origin() const { return levels.front(); }
};

/// IP (ip, asn, country), UA (ua_full, browser, os, device_type) and, when
/// `config.use_rtt` is set, RTT (rtt).
std::vector<FeatureHierarchy> default_features(const RiskConfig& config);

/// Linearly interpolated share of history entries matching the attempt at
/// each level. Unknown values never match. Throws std::invalid_argument on
/// an empty history.
double user_feature_prob(const FeatureHierarchy& feature, const FeatureValues& attempt,
                         std::span<const LoginHistoryEntry> history);

/// (count(value) + alpha) / (total + alpha) over the most specific level
/// only. Throws std::invalid_argument when both total and alpha are zero.
double global_feature_prob(Level level, const std::string& value, const GlobalCounters& counters, double alpha);

/// Share of all stored logins belonging to `user`.
double user_prior(const std::string& user, const GlobalCounters& counters);

/// 1 unless attack data is enabled and the feature consults reputation.
double attack_prob(const FeatureHierarchy& feature, const FeatureValues& attempt, const ReputationSet* reputation,
                   const RiskConfig& config);

/// Product over features with a known origin value of
/// attack * global / user, times user_attack_prior / user_prior.
/// Infinite if any feature matches none of the user's history at any level.
RiskScore risk_score(const FeatureValues& attempt, const std::string& user,
                     std::span<const LoginHistoryEntry> history, const GlobalCounters& counters,
                     const ReputationSet* reputation, const RiskConfig& config,
                     std::span<const FeatureHierarchy> features);

struct Evaluation {
  RiskScore score;
  Outcome outcome = Outcome::Success;
  bool first_login = false;
};

/// Scores attempts against committed history snapshots.
class RiskEngine {
public:
  explicit RiskEngine(RiskConfig config);
  RiskEngine(RiskConfig config, std::vector<FeatureHierarchy> features);

  /// A user without stored logins scores 0 (Success); everyone else is
  /// scored and classified.
  Evaluation evaluate(const FeatureValues& attempt, const std::string& user, const HistoryState& state,
                      const ReputationSet* reputation = nullptr) const;

  RiskScore score(const FeatureValues& attempt, const std::string& user,
                  std::span<const LoginHistoryEntry> history, const GlobalCounters& counters,
                  const ReputationSet* reputation = nullptr) const;

  const RiskConfig& config() const { return config_; }
  const std::vector<FeatureHierarchy>& features() const { return features_; }

private:
  RiskConfig config_;
  std::vector<FeatureHierarchy> features_;
};

}  // namespace rba
