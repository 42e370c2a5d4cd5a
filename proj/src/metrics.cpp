#include "rfloss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace rfloss::metrics {

namespace {

void validateDistribution(const std::vector<double>& p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < -1e-12 || v > 1.0 + 1e-12)
      throw InvalidDistribution("probability outside [0,1]");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw InvalidDistribution("distribution sums to " + std::to_string(sum));
}

}  // namespace

const char* className(int c) {
  switch (c) {
    case 0: return "low";
    case 1: return "medium";
    case 2: return "high";
  }
  return "?";
}

std::vector<BuildingLabel> majorityVote(const std::vector<SamplePrediction>& predictions) {
  std::map<std::pair<std::string, int>, BuildingLabel> groups;
  for (const auto& p : predictions) {
    auto& g = groups[{p.building_id, p.band}];
    g.building_id = p.building_id;
    g.band = p.band;
    g.votes[p.label] += 1;
    g.sample_count += 1;
    g.mean_confidence += p.confidence;
  }
  std::vector<BuildingLabel> out;
  out.reserve(groups.size());
  for (auto& [key, g] : groups) {
    int best = kNumClasses - 1;
    for (int c = kNumClasses - 2; c >= 0; --c)
      if (g.votes[c] > g.votes[best]) best = c;
    g.label = best;
    g.mean_confidence /= g.sample_count;
    out.push_back(std::move(g));
  }
  return out;
}

double buildingEntropy(const std::vector<std::vector<double>>& distributions) {
  if (distributions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : distributions) {
    validateDistribution(p);
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log2(v);
    total += h;
  }
  return total / static_cast<double>(distributions.size());
}

double mmpp(const std::vector<std::vector<double>>& distributions) {
  if (distributions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : distributions) {
    validateDistribution(p);
    total += *std::max_element(p.begin(), p.end());
  }
  return total / static_cast<double>(distributions.size());
}

ClassificationReport classificationReport(const std::vector<int>& truth,
                                          const std::vector<int>& predicted) {
  if (truth.size() != predicted.size())
    throw LengthMismatch("classificationReport: truth and prediction sizes differ");
  if (truth.empty()) throw LengthMismatch("classificationReport: empty input");

  ClassificationReport r;
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.confusion[truth[i]][predicted[i]] += 1;
    if (truth[i] == predicted[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  double f1_sum = 0.0;
  int f1_classes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    int tp = r.confusion[c][c];
    int truth_total = 0, pred_total = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      truth_total += r.confusion[c][k];
      pred_total += r.confusion[k][c];
    }
    if (truth_total == 0 && pred_total == 0) continue;  // class absent everywhere
    r.precision[c] = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
    r.recall[c] = truth_total > 0 ? static_cast<double>(tp) / truth_total : 0.0;
    double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
    f1_sum += r.f1[c];
    ++f1_classes;
  }
  r.macro_f1 = f1_classes > 0 ? f1_sum / f1_classes : 0.0;
  return r;
}

double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments) {
  if (points.size() != assignments.size())
    throw LengthMismatch("silhouette: points and assignments sizes differ");
  const std::size_t n = points.size();
  std::set<int> clusters(assignments.begin(), assignments.end());
  if (clusters.size() < 2) throw SingleCluster("silhouette needs >= 2 clusters");

  std::map<int, int> cluster_size;
  for (int a : assignments) ++cluster_size[a];

  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t d = 0; d < points[i].size(); ++d) {
      double v = points[i][d] - points[j][d];
      s += v * v;
    }
    return std::sqrt(s);
  };

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_size[assignments[i]] == 1) continue;  // singleton scores 0
    std::map<int, double> sum_d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_d[assignments[j]] += dist(i, j);
    }
    double a = sum_d[assignments[i]] / (cluster_size[assignments[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [c, s] : sum_d) {
      if (c == assignments[i]) continue;
      b = std::min(b, s / cluster_size[c]);
    }
    double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

nlohmann::ordered_json EvalReport::toJson() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["task"] = task;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["mean_entropy_buildings"] = mean_entropy_buildings;
  j["mean_entropy_samples"] = mean_entropy_samples;
  j["mmpp"] = mmpp;
  nlohmann::ordered_json conf = nlohmann::ordered_json::array();
  for (int t = 0; t < kNumClasses; ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int p = 0; p < kNumClasses; ++p) row.push_back(detail.confusion[t][p]);
    conf.push_back(std::move(row));
  }
  j["confusion"] = std::move(conf);
  for (int c = 0; c < kNumClasses; ++c) {
    j["per_class"][className(c)] = {{"precision", detail.precision[c]},
                                    {"recall", detail.recall[c]},
                                    {"f1", detail.f1[c]}};
  }
  return j;
}

std::string EvalReport::toText() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "Model        Task  Acc     F1      Entropy MMPP\n";
  os << model;
  for (std::size_t i = model.size(); i < 13; ++i) os << ' ';
  os << task << "   " << accuracy << "  " << macro_f1 << "  " << mean_entropy_buildings
     << "  " << mmpp << "\n";
  return os.str();
}

}  // namespace rfloss::metrics
