#include "rba/risk_engine.hpp"

#include <cmath>
#include <stdexcept>

namespace rba {

std::vector<FeatureHierarchy> default_features(const RiskConfig& config) {
  std::vector<FeatureHierarchy> out;
  out.push_back({"ip",
                 {Level::ip, Level::asn, Level::country},
                 {config.ip_weights.begin(), config.ip_weights.end()},
                 true});
  out.push_back({"ua",
                 {Level::ua_full, Level::browser, Level::os, Level::device_type},
                 {config.ua_weights.begin(), config.ua_weights.end()},
                 false});
  if (config.use_rtt) out.push_back({"rtt", {Level::rtt}, {1.0}, false});
  return out;
}

double user_feature_prob(const FeatureHierarchy& feature, const FeatureValues& attempt,
                         std::span<const LoginHistoryEntry> history) {
  if (history.empty()) throw std::invalid_argument("user_feature_prob: empty user history");
  double prob = 0.0;
  for (std::size_t l = 0; l < feature.levels.size(); ++l) {
    const auto& wanted = at(attempt, feature.levels[l]);
    if (!wanted || feature.weights[l] == 0.0) continue;
    std::size_t matches = 0;
    for (const auto& entry : history) {
      const auto& seen = at(entry.values, feature.levels[l]);
      if (seen && *seen == *wanted) ++matches;
    }
    prob += feature.weights[l] * static_cast<double>(matches) / static_cast<double>(history.size());
  }
  return prob;
}

double global_feature_prob(Level level, const std::string& value, const GlobalCounters& counters, double alpha) {
  const auto total = static_cast<double>(counters.total());
  if (total + alpha == 0.0) throw std::invalid_argument("global_feature_prob: no logins and no smoothing");
  return (static_cast<double>(counters.count(level, value)) + alpha) / (total + alpha);
}

double user_prior(const std::string& user, const GlobalCounters& counters) {
  const auto mine = counters.user_count(user);
  if (mine == 0 || counters.total() == 0) throw std::invalid_argument("user_prior: user has no stored logins");
  return static_cast<double>(mine) / static_cast<double>(counters.total());
}

double attack_prob(const FeatureHierarchy& feature, const FeatureValues& attempt, const ReputationSet* reputation,
                   const RiskConfig& config) {
  if (!config.attack_data_enabled || !feature.uses_reputation) return 1.0;
  const auto& text = at(attempt, feature.origin());
  const auto ip = text ? IpAddress::parse(*text) : std::nullopt;
  const bool listed = ip && reputation && reputation->contains(*ip);
  return listed ? config.rep_hit_prob : config.rep_miss_prob;
}

RiskScore risk_score(const FeatureValues& attempt, const std::string& user,
                     std::span<const LoginHistoryEntry> history, const GlobalCounters& counters,
                     const ReputationSet* reputation, const RiskConfig& config,
                     std::span<const FeatureHierarchy> features) {
  if (history.empty()) throw std::invalid_argument("risk_score: user has no login history");
  double product = 1.0;
  bool unmatched = false;
  for (const auto& feature : features) {
    const auto& origin = at(attempt, feature.origin());
    if (!origin) continue;
    const double p_user = user_feature_prob(feature, attempt, history);
    if (p_user == 0.0) {
      unmatched = true;
      continue;
    }
    const double p_global = global_feature_prob(feature.origin(), *origin, counters, config.global_smoothing_alpha);
    product *= attack_prob(feature, attempt, reputation, config) * p_global / p_user;
  }
  const double prior = user_prior(user, counters);
  if (unmatched) return RiskScore::infinite();
  return {product * config.user_attack_prior / prior};
}

RiskEngine::RiskEngine(RiskConfig config) : RiskEngine(config, default_features(config)) {}

RiskEngine::RiskEngine(RiskConfig config, std::vector<FeatureHierarchy> features)
    : config_(std::move(config)), features_(std::move(features)) {
  config_.validate();
  for (const auto& f : features_) {
    if (f.levels.empty() || f.levels.size() != f.weights.size()) {
      throw ConfigError("feature '" + f.id + "' needs one weight per level");
    }
    double sum = 0.0;
    for (double w : f.weights) {
      if (!(w >= 0.0)) throw ConfigError("feature '" + f.id + "' has a negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("feature '" + f.id + "' weights must sum to 1");
  }
}

RiskScore RiskEngine::score(const FeatureValues& attempt, const std::string& user,
                            std::span<const LoginHistoryEntry> history, const GlobalCounters& counters,
                            const ReputationSet* reputation) const {
  return risk_score(attempt, user, history, counters, reputation, config_, features_);
}

Evaluation RiskEngine::evaluate(const FeatureValues& attempt, const std::string& user, const HistoryState& state,
                                const ReputationSet* reputation) const {
  const auto history = state.user_history(user);
  if (history.empty()) return {RiskScore{0.0}, Outcome::Success, true};
  const auto s = score(attempt, user, history, state.counters, reputation);
  return {s, classify(s, config_), false};
}

}  // namespace rba
