#include "rfloss/ssl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace rfloss::ssl {

void SslConfig::validate() const {
  if (confidence_threshold <= 1.0 / 3.0 || confidence_threshold > 1.0)
    throw ConfigError("confidence threshold must lie in (1/3, 1]");
  if (rule_weight < 0.0 || rule_weight >= 0.5)
    throw ConfigError("rule weight must lie in [0, 0.5)");
  if (max_iterations < 1) throw ConfigError("max iterations must be >= 1");
  if (per_iteration_cap <= 0.0 || per_iteration_cap > 1.0)
    throw ConfigError("per-iteration cap must lie in (0, 1]");
}

std::vector<DomainRule> defaultRules() {
  auto modern_glazing = [](const dataset::BuildingRecord& r) {
    if (!r.glazing) return false;
    std::string g;
    for (char c : *r.glazing)
      g += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return g.find("low-e") != std::string::npos || g.find("low_e") != std::string::npos ||
           g.find("lowe") != std::string::npos || g.find("triple") != std::string::npos;
  };
  return {{"modern-glazing-high-o2i", modern_glazing, 2, 1.0}};
}

std::vector<double> applyRules(const dataset::BuildingRecord& record,
                               const std::vector<double>& distribution,
                               const std::vector<DomainRule>& rules, double w) {
  if (w <= 0.0) return distribution;
  std::vector<double> prior(distribution.size(), 0.0);
  double matched_weight = 0.0;
  for (const auto& rule : rules) {
    if (!rule.predicate(record)) continue;
    prior[rule.target_class] += rule.weight;
    matched_weight += rule.weight;
  }
  if (matched_weight <= 0.0) return distribution;
  for (double& v : prior) v /= matched_weight;
  std::vector<double> out(distribution.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < distribution.size(); ++c) {
    out[c] = (1.0 - w) * distribution[c] + w * prior[c];
    sum += out[c];
  }
  for (double& v : out) v /= sum;
  return out;
}

SelfTrainResult selfTrain(const Trainer& trainer, const forest::Matrix& labeled_rows,
                          const std::vector<int>& labels,
                          const std::vector<double>& weights,
                          const std::vector<UnlabeledRow>& unlabeled,
                          const std::vector<DomainRule>& rules, const SslConfig& cfg) {
  cfg.validate();
  if (labeled_rows.empty()) throw EmptyLabeledSet("selfTrain: labeled set is empty");
  if (labeled_rows.size() != labels.size() || labels.size() != weights.size())
    throw LengthMismatch("selfTrain: labeled rows/labels/weights sizes differ");

  forest::Matrix train_rows = labeled_rows;
  std::vector<int> train_labels = labels;
  std::vector<double> train_weights = weights;

  std::vector<bool> accepted(unlabeled.size(), false);
  SelfTrainResult result;
  result.model = trainer(train_rows, train_labels, train_weights);

  int cap_exhaustions = 0;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    std::size_t remaining = 0;
    for (bool a : accepted)
      if (!a) ++remaining;
    if (remaining == 0) break;

    struct Scored {
      std::size_t index;
      int label;
      double confidence;
      double rule_delta;
    };
    std::vector<Scored> scored;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      if (accepted[i]) continue;
      auto p = result.model.predictProba(unlabeled[i].features);
      std::vector<double> blended = unlabeled[i].record
                                        ? applyRules(*unlabeled[i].record, p, rules,
                                                     cfg.rule_weight)
                                        : p;
      double delta = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) delta += std::fabs(blended[c] - p[c]);
      delta *= 0.5;
      int best = static_cast<int>(blended.size()) - 1;
      for (int c = best - 1; c >= 0; --c)
        if (blended[c] > blended[best]) best = c;
      if (blended[best] >= cfg.confidence_threshold)
        scored.push_back({i, best, blended[best], delta});
    }
    if (scored.empty()) break;

    std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return unlabeled[a.index].id < unlabeled[b.index].id;
    });
    std::size_t cap = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.per_iteration_cap * remaining));
    bool cap_hit = scored.size() > cap;
    if (cap_hit) scored.resize(cap);

    for (const auto& s : scored) {
      accepted[s.index] = true;
      train_rows.push_back(unlabeled[s.index].features);
      train_labels.push_back(s.label);
      train_weights.push_back(1.0);
      result.ledger.push_back(
          {unlabeled[s.index].id, iter + 1, s.label, s.confidence, s.rule_delta});
    }
    result.model = trainer(train_rows, train_labels, train_weights);

    if (cap_hit) {
      if (++cap_exhaustions >= 2) break;
    } else {
      cap_exhaustions = 0;
    }
  }
  return result;
}

}  // namespace rfloss::ssl
