#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfloss/common.hpp"

namespace rfloss::metrics {

constexpr int kNumClasses = 3;

const char* className(int c);  // "low" / "medium" / "high"

struct BuildingLabel {
  std::string building_id;
  int band = 0;
  int label = 0;  // argmax of votes, ties toward the higher loss class
  std::array<int, kNumClasses> votes{};
  int sample_count = 0;
  double mean_confidence = 0.0;  // mean top-class probability, when available
};

struct SamplePrediction {
  std::string building_id;
  int band = 0;
  int label = 0;
  double confidence = 1.0;
};

std::vector<BuildingLabel> majorityVote(const std::vector<SamplePrediction>& predictions);

// Mean Shannon entropy (bits) of the given class distributions.
double buildingEntropy(const std::vector<std::vector<double>>& distributions);

// Mean maximum predicted probability.
double mmpp(const std::vector<std::vector<double>>& distributions);

struct ClassificationReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<std::array<int, kNumClasses>, kNumClasses> confusion{};  // [truth][pred]
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
};

ClassificationReport classificationReport(const std::vector<int>& truth,
                                          const std::vector<int>& predicted);

double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments);

// Table-II-style summary: classification quality plus confidence measures.
struct EvalReport {
  std::string model;
  std::string task;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_entropy_buildings = 0.0;  // entropy averaged per building, then over buildings
  double mean_entropy_samples = 0.0;    // entropy averaged over all samples
  double mmpp = 0.0;
  ClassificationReport detail;

  nlohmann::ordered_json toJson() const;
  std::string toText() const;
};

}  // namespace rfloss::metrics
