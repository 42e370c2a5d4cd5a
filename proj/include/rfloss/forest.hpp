#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfloss/common.hpp"

namespace rfloss::forest {

enum class FeatureKind { numeric, categorical };

// Categorical features are integer codes in [0, n_categories); subset splits
// are capped at 32 categories.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  std::vector<int> n_categories;  // 0 for numeric columns

  std::size_t size() const { return names.size(); }
  void validate() const;
  nlohmann::ordered_json toJson() const;
  static FeatureSchema fromJson(const nlohmann::json& j);
};

using Row = std::vector<double>;
using Matrix = std::vector<Row>;

struct TreeNode {
  int feature = -1;            // -1 marks a leaf
  double threshold = 0.0;      // numeric: left if x <= threshold
  std::uint32_t cat_mask = 0;  // categorical: left if mask bit for code set
  bool categorical = false;
  int left = -1;
  int right = -1;
  std::vector<double> values;  // leaf payload: class probs or {scalar}
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  const std::vector<double>& leafValues(const Row& row) const;
  nlohmann::ordered_json toJson() const;
  static DecisionTree fromJson(const nlohmann::json& j);
};

enum class ModelKind { random_forest, gb_levelwise, gb_leafwise, voting };

std::string modelKindName(ModelKind k);
ModelKind modelKindFromName(const std::string& s);

enum class GrowthStrategy { level_wise, leaf_wise };

struct RfConfig {
  int n_trees = 200;
  int max_depth = 12;
  int min_samples_leaf = 2;
  bool bootstrap = true;
  bool class_weights = true;  // inverse-frequency
  std::uint64_t seed = 0;
};

struct GbConfig {
  int n_rounds = 300;
  double learning_rate = 0.1;
  int max_depth = 6;     // level-wise
  int max_leaves = 31;   // leaf-wise
  int min_samples_leaf = 2;
  double reg_lambda = 1.0;
  int early_stop_patience = 20;
  double val_fraction = 0.1;  // used only when no explicit validation set
  bool class_weights = true;
  std::uint64_t seed = 0;
};

constexpr int kNumClasses = 3;

class EnsembleModel {
 public:
  ModelKind kind = ModelKind::random_forest;
  FeatureSchema schema;
  int n_classes = kNumClasses;
  double learning_rate = 0.1;
  std::vector<double> base_score;       // boosting: per-class log prior
  std::vector<DecisionTree> trees;      // boosting: round-major, n_classes each
  std::vector<EnsembleModel> members;   // voting only
  std::vector<double> feature_gain;     // raw accumulated split gain
  bool single_class = false;            // degenerate constant model
  int only_class = 0;
  double oob_accuracy = -1.0;           // random forest only
  int best_rounds = 0;                  // boosting: rounds kept after early stop

  std::vector<double> predictProba(const Row& row) const;
  int predictClass(const Row& row) const;  // argmax, ties toward higher class

  nlohmann::ordered_json toJson() const;
  static EnsembleModel fromJson(const nlohmann::json& j);
};

EnsembleModel trainRandomForest(const Matrix& rows, const std::vector<int>& labels,
                                const std::vector<double>& weights,
                                const FeatureSchema& schema, const RfConfig& cfg);

EnsembleModel trainGradientBoosting(const Matrix& rows, const std::vector<int>& labels,
                                    const std::vector<double>& weights,
                                    const FeatureSchema& schema, GrowthStrategy strategy,
                                    const GbConfig& cfg, const Matrix* val_rows = nullptr,
                                    const std::vector<int>* val_labels = nullptr);

// Soft voting over {random forest, gb level-wise, gb leaf-wise}.
EnsembleModel trainVoting(const Matrix& rows, const std::vector<int>& labels,
                          const std::vector<double>& weights, const FeatureSchema& schema,
                          const RfConfig& rf_cfg, const GbConfig& gb_cfg);

// Total split gain per feature, normalized to sum 1.
std::map<std::string, double> featureImportance(const EnsembleModel& model);

// Leaf-wise boosted regressor with squared-error objective (used by the
// imputation chain).
struct GbRegressor {
  FeatureSchema schema;
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<DecisionTree> trees;

  double predict(const Row& row) const;
};

struct GbRegConfig {
  int n_rounds = 100;
  double learning_rate = 0.1;
  int max_leaves = 31;
  int min_samples_leaf = 5;
  double reg_lambda = 1.0;
  std::uint64_t seed = 0;
};

GbRegressor trainGBRegressor(const Matrix& rows, const std::vector<double>& targets,
                             const FeatureSchema& schema, const GbRegConfig& cfg);

std::vector<double> softmax(const std::vector<double>& scores);

}  // namespace rfloss::forest
