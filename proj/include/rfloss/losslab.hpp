#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfloss/common.hpp"
#include "rfloss/dataset.hpp"
#include "rfloss/geoplane.hpp"

namespace rfloss::losslab {

enum class LinkType { O2I, I2I };
enum class IndoorRule { p50, centroid30, outdoor };

struct IndoorVerdict {
  std::string sample_id;
  bool indoor = false;
  std::string building_id;  // set when indoor
  double overlap = 0.0;
  IndoorRule rule = IndoorRule::outdoor;
  double est_depth = 0.0;  // m from the reported position to the facade; 0 outside
};

struct LossObservation {
  LinkType link = LinkType::O2I;
  std::string sample1;  // O2I: outdoor sample; I2I: stronger sample
  std::string sample2;  // O2I: indoor sample;  I2I: weaker sample
  std::string cell_id;
  int band = 0;
  double distance = 0.0;  // m, horizontal
  double loss = 0.0;      // dB/m, positive = more attenuation at sample2
  std::string building_id;
};

struct TransformParams {
  double lambda = 1.0;
  double shift = 0.0;  // applied as y' = y + shift so y' > 0 on the fit set

  double apply(double y) const;
  double invert(double t) const;
};

struct LossQuantizer {
  TransformParams transform;
  std::vector<double> centers;           // transformed space, ascending
  std::vector<std::pair<int, double>> silhouette_sweep;  // (k, score)

  int label(double loss) const;  // 0=low 1=medium 2=high; ties toward higher

  nlohmann::ordered_json toJson() const;
  static LossQuantizer fromJson(const nlohmann::json& j);
};

struct PairConfig {
  double d_min = 1.0;    // m
  double d_max = 300.0;  // m
  int max_pairs_per_indoor = 5;
  // anchors with a worse reported accuracy are too unreliable to pair
  double max_position_sigma = 6.0;  // m
  // O2I anchors: outdoor ends must be confidently outdoor, indoor ends near
  // the facade so the envelope term dominates the interior term; pairs are
  // picked closest to the target separation to stabilize the denominator.
  double outdoor_max_overlap = 0.10;
  double o2i_max_depth = 4.0;  // m, estimated from the reported position
  double target_distance = 20.0;  // m
  // I2I pairs need an interior-depth contrast relative to their separation
  // for the per-meter rate to be observable; highest-contrast pairs first.
  // Short pairs are skipped: position noise fakes depth contrast there.
  double i2i_min_gap_ratio = 0.4;  // |depth1 - depth2| / distance
  double i2i_d_min = 9.0;          // m
};

struct QuantizerConfig {
  int k = 3;
  int k_sweep_lo = 2;
  int k_sweep_hi = 10;
  int restarts = 10;
  int silhouette_subsample = 5000;
  std::uint64_t seed = 0;
};

IndoorVerdict detectIndoor(const dataset::MeasurementSample& sample,
                           const std::vector<dataset::BuildingRecord>& buildings,
                           int budget);

std::vector<LossObservation> pairAndComputeLoss(
    const std::vector<IndoorVerdict>& verdicts,
    const std::vector<dataset::MeasurementSample>& samples, LinkType link,
    const PairConfig& cfg);

LossQuantizer fitQuantizer(const std::vector<double>& losses, const QuantizerConfig& cfg);

std::vector<std::pair<LossObservation, int>> labelLosses(
    const LossQuantizer& quantizer, const std::vector<LossObservation>& observations);

// Drops |z| > 3 outliers within each (building, band, link) group; groups with
// zero spread or fewer than 3 observations pass through unfiltered.
std::vector<std::pair<LossObservation, int>> zscoreFilter(
    const std::vector<std::pair<LossObservation, int>>& labeled);

// Seeded k-means with k-means++ initialization on scalar data. Returns
// ascending centers; throws DegenerateCluster when every restart leaves an
// empty cluster.
std::vector<double> kmeans1d(const std::vector<double>& values, int k, int restarts,
                             std::uint64_t seed);

// Box-Cox profile log-likelihood fit; the shift is 1 - min(values).
TransformParams fitBoxCox(const std::vector<double>& values);

}  // namespace rfloss::losslab
