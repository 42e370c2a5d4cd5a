#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rfloss/common.hpp"
#include "rfloss/dataset.hpp"
#include "rfloss/forest.hpp"

namespace rfloss::ssl {

struct SslConfig {
  double confidence_threshold = 0.80;  // tau, must exceed 1/3
  int max_iterations = 10;
  double per_iteration_cap = 0.20;  // fraction of the remaining unlabeled pool
  double rule_weight = 0.15;        // w, must stay below 0.5

  void validate() const;
};

// Additive prior on the class distribution; never a hard assignment.
struct DomainRule {
  std::string name;
  std::function<bool(const dataset::BuildingRecord&)> predicate;
  int target_class = 2;
  double weight = 1.0;  // relative share among simultaneously matching rules
};

// Ships the modern-glazing prior: low-E or triple glazing pulls the O2I
// distribution toward the high attenuation class.
std::vector<DomainRule> defaultRules();

std::vector<double> applyRules(const dataset::BuildingRecord& record,
                               const std::vector<double>& distribution,
                               const std::vector<DomainRule>& rules, double w);

struct UnlabeledRow {
  std::string id;
  forest::Row features;
  const dataset::BuildingRecord* record = nullptr;  // rule predicate input
};

struct PseudoLabelEntry {
  std::string row_id;
  int iteration = 0;
  int label = 0;
  double confidence = 0.0;
  double rule_delta = 0.0;  // total variation moved by the rule blend
};

using Trainer = std::function<forest::EnsembleModel(
    const forest::Matrix&, const std::vector<int>&, const std::vector<double>&)>;

struct SelfTrainResult {
  forest::EnsembleModel model;
  std::vector<PseudoLabelEntry> ledger;
};

SelfTrainResult selfTrain(const Trainer& trainer, const forest::Matrix& labeled_rows,
                          const std::vector<int>& labels,
                          const std::vector<double>& weights,
                          const std::vector<UnlabeledRow>& unlabeled,
                          const std::vector<DomainRule>& rules, const SslConfig& cfg);

}  // namespace rfloss::ssl
