#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfloss/common.hpp"
#include "rfloss/forest.hpp"
#include "rfloss/geoplane.hpp"

namespace rfloss::dataset {

enum class Usage { residential = 0, commercial = 1, civic = 2, other = 3 };
enum class Task { O2I, I2I };

std::string usageName(Usage u);
Usage usageFromName(const std::string& s);
std::string taskName(Task t);
Task taskFromName(const std::string& s);

// Maps raw usage strings (OSM-style tags and free text) onto the four
// modeling categories. Editable via a JSON file; a built-in table covers
// common values.
using UsageGroupMap = std::map<std::string, Usage>;
const UsageGroupMap& defaultUsageGroups();
UsageGroupMap loadUsageGroups(const std::string& path);
Usage groupUsage(const std::string& raw, const UsageGroupMap& table = defaultUsageGroups());

struct BuildingRecord {
  std::string id;
  geoplane::Polygon polygon;
  std::optional<double> height;            // m
  std::optional<int> floor_count;
  std::optional<int> construction_year;
  Usage usage = Usage::other;
  std::optional<std::string> wall_type;
  std::optional<std::string> wall_material;
  std::optional<std::string> insulation;
  std::optional<std::string> glazing;
  std::optional<int> epc;                  // ordinal A-G as 1-7
  std::optional<double> energy_mean;       // kWh/m^2/yr
  std::optional<double> energy_std;
};

struct MeasurementSample {
  std::string id;
  geoplane::Point position;  // local planar meters
  double accuracy = 1.0;     // sigma_s, m
  std::string cell_id;
  int band = 0;              // EARFCN
  double rsrp = 0.0;         // dBm
  double timestamp = 0.0;
};

// Equirectangular projection about a reference point; adequate for the
// city-scale extents this pipeline targets (<= 10 km).
struct Projection {
  double lon0 = 0.0;
  double lat0 = 0.0;

  geoplane::Point toLocal(double lon, double lat) const;
  std::pair<double, double> toLonLat(const geoplane::Point& p) const;
};

// ---------------------------------------------------------------------------
// CSV plumbing (comment lines starting with '#' are metadata headers)
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable readCsv(const std::string& path);
void writeCsv(const std::string& path, const CsvTable& table);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct LoadReport {
  std::vector<std::string> footprints_without_metadata;
  std::vector<std::string> unmatched_metadata_ids;
  int rejected_samples = 0;
};

std::vector<BuildingRecord> loadBuildings(const std::string& geojson_path,
                                          const std::string& metadata_csv_path,
                                          Projection* projection = nullptr,
                                          LoadReport* report = nullptr,
                                          const UsageGroupMap& usage_groups =
                                              defaultUsageGroups());

std::vector<MeasurementSample> loadSamples(const std::string& csv_path,
                                           const Projection& projection,
                                           LoadReport* report = nullptr);

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

struct ImputeConfig {
  double simple_threshold = 0.1;  // missing fraction at or below: median/mode
  int max_iterations = 10;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
};

struct ImputeReport {
  std::map<std::string, std::string> method_per_column;  // "none"|"simple"|"chained"
  int iterations = 0;
};

// Fills every optional attribute in place. Columns with missing fraction at
// or below the simple threshold get median/mode fills; the rest go through
// chained iterative regression (gradient-boosted), cycled to convergence.
// Rule constraints are re-applied after every cycle.
void imputeAttributes(std::vector<BuildingRecord>& records, const ImputeConfig& cfg,
                      ImputeReport* report = nullptr);

// ---------------------------------------------------------------------------
// Feature engineering
// ---------------------------------------------------------------------------

struct FeatureConfig {
  double residential_unit_area = 37.0;  // m^2, nominal dwelling space standard
  double nonresidential_unit_area = 60.0;
  double floor_to_ceiling_min = 2.2;
  double floor_to_ceiling_max = 4.5;
};

struct EngineeredFeatures {
  geoplane::FootprintMetrics metrics;
  int inner_wall_count = 0;
  double wall_to_wall = 0.0;      // m
  double floor_to_ceiling = 0.0;  // m
};

EngineeredFeatures engineerFeatures(const BuildingRecord& record,
                                    const FeatureConfig& cfg = {});

// ---------------------------------------------------------------------------
// Categorical code book
// ---------------------------------------------------------------------------

// Code 0 is reserved for "other"/unseen; fitted categories take 1..n.
class CodeBook {
 public:
  void fit(const std::string& column, const std::vector<std::string>& values);
  int encode(const std::string& column, const std::string& value,
             bool* unknown = nullptr) const;
  std::string decode(const std::string& column, int code) const;
  int cardinality(const std::string& column) const;  // including the reserved code

  nlohmann::ordered_json toJson() const;
  static CodeBook fromJson(const nlohmann::json& j);

 private:
  std::map<std::string, std::vector<std::string>> columns_;
};

CodeBook fitCodeBook(const std::vector<BuildingRecord>& records,
                     const std::vector<int>& bands);

// ---------------------------------------------------------------------------
// Feature rows (task-specific column sets)
// ---------------------------------------------------------------------------

forest::FeatureSchema featureSchema(Task task, const CodeBook& codebook);

forest::Row featureRow(const BuildingRecord& record, const EngineeredFeatures& eng,
                       int band, Task task, const CodeBook& codebook,
                       bool* unknown_category = nullptr);

}  // namespace rfloss::dataset
