#pragma once

#include <array>
#include <string>
#include <vector>

#include "rfloss/common.hpp"
#include "rfloss/dataset.hpp"
#include "rfloss/geoplane.hpp"

namespace rfloss::synthcity {

struct SynthConfig {
  int n_buildings = 200;
  int n_cells = 3;
  double samples_per_building_mean = 100.0;
  double indoor_fraction = 0.65;
  double street_width = 12.0;  // m between building lots
  double shadowing_sigma = 2.0;  // dB
  double pos_error_min = 2.0;    // sigma_s range, m
  double pos_error_max = 10.0;
  std::array<double, 3> penetration_db{5.0, 15.0, 30.0};      // per O2I class
  std::array<double, 3> interior_rate_db_per_m{0.2, 1.2, 2.8};  // per I2I class
  std::vector<int> bands{1300, 3350};  // EARFCNs shared by all cells
  double reference_power = -30.0;      // dBm at 1 m
  double path_loss_exponent = 2.0;
  // when set, class-defining attributes (insulation, glazing) are assigned
  // without crossover noise
  bool deterministic_attributes = false;
  std::uint64_t seed = 1;
};

struct TrueBuilding {
  dataset::BuildingRecord record;
  int o2i_class = 0;
  int i2i_class = 0;
};

struct Cell {
  std::string id;
  geoplane::Point position;
  std::vector<int> bands;
};

struct Scenario {
  SynthConfig config;
  std::vector<TrueBuilding> buildings;
  std::vector<Cell> cells;
  dataset::Projection projection;  // local meters <-> exported lon/lat
};

struct SampleTruth {
  std::string sample_id;
  bool indoor = false;
  std::string building_id;
  geoplane::Point true_position;
};

struct EmittedSamples {
  std::vector<dataset::MeasurementSample> samples;  // reported (noisy) positions
  std::vector<SampleTruth> truth;
};

Scenario generateScenario(const SynthConfig& cfg);
EmittedSamples emitSamples(const Scenario& scenario);

// RSRP the generator assigns to a position (used by tests as the closed-form
// reference); shadowing noise excluded.
double meanRsrp(const Scenario& scenario, const geoplane::Point& pos, std::size_t cell,
                bool indoor, std::size_t building);

// Writes buildings.geojson, metadata.csv, samples.csv, truth_samples.csv and
// truth_buildings.csv in the ingestion formats. `header` is prefixed as a
// comment/meta block on every file.
void exportScenario(const Scenario& scenario, const EmittedSamples& emitted,
                    const std::string& out_dir, const std::string& header);

}  // namespace rfloss::synthcity
