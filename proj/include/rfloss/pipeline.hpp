#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfloss/common.hpp"
#include "rfloss/dataset.hpp"
#include "rfloss/forest.hpp"
#include "rfloss/losslab.hpp"
#include "rfloss/metrics.hpp"
#include "rfloss/ssl.hpp"
#include "rfloss/synthcity.hpp"

namespace rfloss::pipeline {

struct Paths {
  std::string buildings;  // GeoJSON footprints
  std::string metadata;   // building attribute CSV
  std::string samples;    // measurement CSV
  std::string out = "out";
  std::string truth;      // building truth CSV (eval stage)
};

struct PipelineConfig {
  Paths paths;
  std::string task = "both";  // o2i | i2i | both
  std::string mode = "sl";    // sl | ssl
  std::string model = "rf";   // rf | gb-level | gb-leaf | voting
  std::uint64_t seed = 1;

  synthcity::SynthConfig synth;
  losslab::PairConfig pair;
  losslab::QuantizerConfig quantizer;
  dataset::ImputeConfig impute;
  dataset::FeatureConfig features;
  ssl::SslConfig ssl_cfg;
  forest::RfConfig rf;
  forest::GbConfig gb;

  int overlap_budget = 1024;     // Monte Carlo budget for indoor detection
  double test_fraction = 0.2;    // building-stratified holdout
  double hidden_fraction = 0.0;  // buildings whose labels are withheld (SSL study)

  // Resolved, canonical form; its FNV-1a hash stamps every output file.
  nlohmann::ordered_json toJson() const;
  static PipelineConfig fromJson(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);

  std::string hash() const;    // 16 hex digits
  std::string header() const;  // "config_hash=<hex> seed=<n>"

  std::vector<dataset::Task> tasks() const;
  void validate() const;
};

// Per-task training/eval summary returned by runTrain.
struct TrainResult {
  dataset::Task task;
  metrics::EvalReport report;
  std::vector<metrics::BuildingLabel> test_labels;  // model vote on held-out set
  std::vector<metrics::BuildingLabel> test_truth;   // quantizer-label majority
  std::size_t n_pseudo_labels = 0;
};

void runSynth(const PipelineConfig& cfg);
void runLabel(const PipelineConfig& cfg);
std::vector<TrainResult> runTrain(const PipelineConfig& cfg);
void runInfer(const PipelineConfig& cfg);
std::vector<metrics::EvalReport> runEval(const PipelineConfig& cfg);

}  // namespace rfloss::pipeline
