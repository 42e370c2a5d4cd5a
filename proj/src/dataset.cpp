#include "rfloss/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace rfloss::dataset {

namespace {

constexpr double kEarthRadius = 6371000.0;
constexpr double kDegToRad = M_PI / 180.0;
constexpr int kCurrentYear = 2026;

std::string toLower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::optional<double> parseDoubleOpt(const std::string& s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<int> parseIntOpt(const std::string& s) {
  auto d = parseDoubleOpt(s);
  if (!d) return std::nullopt;
  return static_cast<int>(std::lround(*d));
}

std::optional<int> parseEpc(const std::string& s) {
  std::string t = toLower(trim(s));
  if (t.empty()) return std::nullopt;
  if (t.size() == 1 && t[0] >= 'a' && t[0] <= 'g') return t[0] - 'a' + 1;
  auto v = parseIntOpt(t);
  if (v && *v >= 1 && *v <= 7) return v;
  return std::nullopt;
}

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csvQuote(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string usageName(Usage u) {
  switch (u) {
    case Usage::residential: return "residential";
    case Usage::commercial: return "commercial";
    case Usage::civic: return "civic";
    case Usage::other: return "other";
  }
  return "other";
}

Usage usageFromName(const std::string& s) {
  if (s == "residential") return Usage::residential;
  if (s == "commercial") return Usage::commercial;
  if (s == "civic") return Usage::civic;
  return Usage::other;
}

std::string taskName(Task t) { return t == Task::O2I ? "o2i" : "i2i"; }

Task taskFromName(const std::string& s) {
  std::string t = toLower(s);
  if (t == "o2i") return Task::O2I;
  if (t == "i2i") return Task::I2I;
  throw ConfigError("unknown task: " + s);
}

const UsageGroupMap& defaultUsageGroups() {
  static const UsageGroupMap table = {
      {"residential", Usage::residential}, {"house", Usage::residential},
      {"apartments", Usage::residential},  {"apartment", Usage::residential},
      {"detached", Usage::residential},    {"semidetached_house", Usage::residential},
      {"terrace", Usage::residential},     {"dormitory", Usage::residential},
      {"bungalow", Usage::residential},    {"flat", Usage::residential},
      {"commercial", Usage::commercial},   {"office", Usage::commercial},
      {"retail", Usage::commercial},       {"shop", Usage::commercial},
      {"hotel", Usage::commercial},        {"industrial", Usage::commercial},
      {"warehouse", Usage::commercial},    {"supermarket", Usage::commercial},
      {"restaurant", Usage::commercial},   {"civic", Usage::civic},
      {"school", Usage::civic},            {"university", Usage::civic},
      {"hospital", Usage::civic},          {"church", Usage::civic},
      {"cathedral", Usage::civic},         {"museum", Usage::civic},
      {"library", Usage::civic},           {"government", Usage::civic},
      {"public", Usage::civic},            {"amenity", Usage::civic},
      {"other", Usage::other},             {"garage", Usage::other},
      {"shed", Usage::other},              {"roof", Usage::other},
  };
  return table;
}

UsageGroupMap loadUsageGroups(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open usage group file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError("usage group file " + path + ": " + e.what());
  }
  UsageGroupMap table;
  for (auto it = j.begin(); it != j.end(); ++it)
    table[toLower(it.key())] = usageFromName(it.value().get<std::string>());
  return table;
}

Usage groupUsage(const std::string& raw, const UsageGroupMap& table) {
  auto it = table.find(toLower(trim(raw)));
  return it == table.end() ? Usage::other : it->second;
}

geoplane::Point Projection::toLocal(double lon, double lat) const {
  return {(lon - lon0) * kDegToRad * std::cos(lat0 * kDegToRad) * kEarthRadius,
          (lat - lat0) * kDegToRad * kEarthRadius};
}

std::pair<double, double> Projection::toLonLat(const geoplane::Point& p) const {
  return {lon0 + p.x / (kDegToRad * std::cos(lat0 * kDegToRad) * kEarthRadius),
          lat0 + p.y / (kDegToRad * kEarthRadius)};
}

// ---------------------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable readCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file: " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') {
      table.comments.push_back(line);
      continue;
    }
    if (trim(line).empty()) continue;
    auto fields = splitCsvLine(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != table.header.size())
        throw ParseError(path + ": row has " + std::to_string(fields.size()) +
                         " fields, header has " + std::to_string(table.header.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw ParseError(path + ": missing CSV header");
  return table;
}

void writeCsv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write CSV file: " + path);
  for (const auto& c : table.comments) out << c << "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << csvQuote(table.header[i]);
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << csvQuote(row[i]);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

namespace {

void applyProperties(BuildingRecord& r, const nlohmann::json& props,
                     const UsageGroupMap& usage_groups) {
  auto str = [&](const char* key) -> std::optional<std::string> {
    if (!props.contains(key) || props[key].is_null()) return std::nullopt;
    if (props[key].is_string()) {
      std::string v = trim(props[key].get<std::string>());
      if (v.empty()) return std::nullopt;
      return v;
    }
    return std::nullopt;
  };
  auto num = [&](const char* key) -> std::optional<double> {
    if (!props.contains(key) || props[key].is_null()) return std::nullopt;
    if (props[key].is_number()) return props[key].get<double>();
    if (props[key].is_string()) return parseDoubleOpt(props[key].get<std::string>());
    return std::nullopt;
  };
  if (auto v = num("height")) r.height = v;
  if (auto v = num("height_m")) r.height = v;
  if (auto v = num("floor_count")) r.floor_count = static_cast<int>(std::lround(*v));
  if (auto v = num("floors")) r.floor_count = static_cast<int>(std::lround(*v));
  if (auto v = num("construction_year"))
    r.construction_year = static_cast<int>(std::lround(*v));
  if (auto v = str("usage")) r.usage = groupUsage(*v, usage_groups);
  if (auto v = str("wall_type")) r.wall_type = v;
  if (auto v = str("wall_material")) r.wall_material = v;
  if (auto v = str("insulation")) r.insulation = v;
  if (auto v = str("glazing")) r.glazing = v;
  if (auto v = str("epc")) r.epc = parseEpc(*v);
  else if (auto w = num("epc")) r.epc = static_cast<int>(std::lround(*w));
  if (auto v = num("energy_mean")) r.energy_mean = v;
  if (auto v = num("energy_std")) r.energy_std = v;
}

}  // namespace

std::vector<BuildingRecord> loadBuildings(const std::string& geojson_path,
                                          const std::string& metadata_csv_path,
                                          Projection* projection, LoadReport* report,
                                          const UsageGroupMap& usage_groups) {
  std::ifstream in(geojson_path);
  if (!in) throw ParseError("cannot open GeoJSON file: " + geojson_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ParseError(std::string("GeoJSON parse: ") + e.what());
  }
  if (doc.value("type", "") != std::string("FeatureCollection"))
    throw ParseError(geojson_path + ": expected a FeatureCollection");

  struct RawFeature {
    std::string id;
    std::vector<std::vector<std::pair<double, double>>> rings;  // lon/lat
    nlohmann::json props;
  };
  std::vector<RawFeature> raw;
  double lon_sum = 0.0, lat_sum = 0.0;
  std::size_t vertex_count = 0;

  for (const auto& feat : doc.at("features")) {
    const auto& geom = feat.at("geometry");
    if (geom.value("type", "") != std::string("Polygon"))
      throw ParseError(geojson_path + ": only Polygon geometries are supported");
    RawFeature rf;
    rf.props = feat.value("properties", nlohmann::json::object());
    if (rf.props.contains("id"))
      rf.id = rf.props["id"].is_string() ? rf.props["id"].get<std::string>()
                                         : rf.props["id"].dump();
    else if (rf.props.contains("building_id"))
      rf.id = rf.props["building_id"].is_string()
                  ? rf.props["building_id"].get<std::string>()
                  : rf.props["building_id"].dump();
    else
      rf.id = "b" + std::to_string(raw.size());
    for (const auto& ring : geom.at("coordinates")) {
      std::vector<std::pair<double, double>> r;
      for (const auto& pt : ring) {
        double lon = pt.at(0).get<double>();
        double lat = pt.at(1).get<double>();
        r.emplace_back(lon, lat);
        lon_sum += lon;
        lat_sum += lat;
        ++vertex_count;
      }
      rf.rings.push_back(std::move(r));
    }
    if (rf.rings.empty()) throw ParseError(geojson_path + ": polygon with no rings");
    raw.push_back(std::move(rf));
  }
  if (raw.empty()) throw ParseError(geojson_path + ": no features");

  Projection proj{lon_sum / vertex_count, lat_sum / vertex_count};
  if (projection) *projection = proj;

  std::vector<BuildingRecord> records;
  records.reserve(raw.size());
  for (auto& rf : raw) {
    auto project = [&](const std::vector<std::pair<double, double>>& ring) {
      std::vector<geoplane::Point> out;
      for (const auto& [lon, lat] : ring) out.push_back(proj.toLocal(lon, lat));
      return out;
    };
    std::vector<std::vector<geoplane::Point>> holes;
    for (std::size_t h = 1; h < rf.rings.size(); ++h)
      holes.push_back(project(rf.rings[h]));
    BuildingRecord rec{rf.id, geoplane::Polygon(project(rf.rings[0]), std::move(holes))};
    applyProperties(rec, rf.props, usage_groups);
    records.push_back(std::move(rec));
  }

  // metadata join
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].id] = i;
  std::set<std::size_t> matched;

  if (!metadata_csv_path.empty()) {
    CsvTable meta = readCsv(metadata_csv_path);
    int c_id = meta.column("building_id");
    int c_lon = meta.column("lon");
    int c_lat = meta.column("lat");
    for (const auto& row : meta.rows) {
      std::size_t target = records.size();
      std::string row_id = c_id >= 0 ? trim(row[c_id]) : "";
      if (!row_id.empty()) {
        auto it = by_id.find(row_id);
        if (it != by_id.end()) target = it->second;
      }
      if (target == records.size() && c_lon >= 0 && c_lat >= 0) {
        auto lon = parseDoubleOpt(row[c_lon]);
        auto lat = parseDoubleOpt(row[c_lat]);
        if (lon && lat) {
          geoplane::Point p = proj.toLocal(*lon, *lat);
          double best = 5.0, second = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < records.size(); ++i) {
            geoplane::Point c = records[i].polygon.centroid();
            double d = std::hypot(c.x - p.x, c.y - p.y);
            if (d < best) {
              second = best;
              best = d;
              target = i;
            } else if (d < second) {
              second = d;
            }
          }
          if (target < records.size() && std::fabs(second - best) < 1e-6)
            throw AmbiguousJoin("two footprints tie for metadata row '" + row_id + "'");
        }
      }
      if (target >= records.size()) {
        if (report) report->unmatched_metadata_ids.push_back(row_id);
        continue;
      }
      matched.insert(target);
      BuildingRecord& r = records[target];
      auto get = [&](const char* name) -> std::string {
        int c = meta.column(name);
        return c >= 0 ? trim(row[c]) : "";
      };
      if (auto v = parseDoubleOpt(get("height_m"))) r.height = v;
      if (auto v = parseIntOpt(get("floor_count"))) r.floor_count = v;
      if (auto v = parseIntOpt(get("construction_year"))) r.construction_year = v;
      if (std::string u = get("usage"); !u.empty()) r.usage = groupUsage(u, usage_groups);
      if (std::string v = get("wall_type"); !v.empty()) r.wall_type = v;
      if (std::string v = get("wall_material"); !v.empty()) r.wall_material = v;
      if (std::string v = get("insulation"); !v.empty()) r.insulation = v;
      if (std::string v = get("glazing"); !v.empty()) r.glazing = v;
      if (auto v = parseEpc(get("epc"))) r.epc = v;
      if (auto v = parseDoubleOpt(get("energy_mean"))) r.energy_mean = v;
      if (auto v = parseDoubleOpt(get("energy_std"))) r.energy_std = v;
    }
  }
  if (report)
    for (std::size_t i = 0; i < records.size(); ++i)
      if (!matched.count(i)) report->footprints_without_metadata.push_back(records[i].id);

  // field-level validity rules
  for (auto& r : records) {
    if (r.height && *r.height <= 0.0) r.height.reset();
    if (r.floor_count && *r.floor_count < 1) r.floor_count.reset();
    if (r.construction_year &&
        (*r.construction_year < 1800 || *r.construction_year > kCurrentYear))
      r.construction_year.reset();
    if (r.energy_std && *r.energy_std < 0.0) r.energy_std.reset();
    if (r.epc && (*r.epc < 1 || *r.epc > 7)) r.epc.reset();
  }
  return records;
}

std::vector<MeasurementSample> loadSamples(const std::string& csv_path,
                                           const Projection& projection,
                                           LoadReport* report) {
  CsvTable t = readCsv(csv_path);
  const char* required[] = {"id",      "lon",    "lat",       "accuracy_m",
                            "cell_id", "earfcn", "rsrp_dbm",  "timestamp"};
  for (const char* name : required)
    if (t.column(name) < 0) throw ParseError(csv_path + ": missing column " + name);
  int c_id = t.column("id"), c_lon = t.column("lon"), c_lat = t.column("lat"),
      c_acc = t.column("accuracy_m"), c_cell = t.column("cell_id"),
      c_band = t.column("earfcn"), c_rsrp = t.column("rsrp_dbm"),
      c_ts = t.column("timestamp");

  std::vector<MeasurementSample> out;
  for (const auto& row : t.rows) {
    auto lon = parseDoubleOpt(row[c_lon]);
    auto lat = parseDoubleOpt(row[c_lat]);
    auto acc = parseDoubleOpt(row[c_acc]);
    auto band = parseIntOpt(row[c_band]);
    auto rsrp = parseDoubleOpt(row[c_rsrp]);
    auto ts = parseDoubleOpt(row[c_ts]);
    if (!lon || !lat || !acc || !band || !rsrp || !ts)
      throw ParseError(csv_path + ": malformed sample row for id " + row[c_id]);
    if (*acc <= 0.0 || *rsrp < -160.0 || *rsrp > -40.0) {
      if (report) ++report->rejected_samples;
      continue;
    }
    MeasurementSample s;
    s.id = row[c_id];
    s.position = projection.toLocal(*lon, *lat);
    s.accuracy = *acc;
    s.cell_id = row[c_cell];
    s.band = *band;
    s.rsrp = *rsrp;
    s.timestamp = *ts;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

namespace {

// Internal tabular view used by the imputation chain.
struct ImputeColumn {
  std::string name;
  bool categorical = false;
  // numeric value or categorical code; NaN marks missing
  std::vector<double> values;
  std::vector<std::string> categories;  // categorical only

  double missingFraction() const {
    std::size_t miss = 0;
    for (double v : values)
      if (std::isnan(v)) ++miss;
    return static_cast<double>(miss) / static_cast<double>(values.size());
  }
};

double numOrNan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}
double numOrNan(const std::optional<int>& v) {
  return v ? static_cast<double>(*v) : std::numeric_limits<double>::quiet_NaN();
}

double catCode(const std::optional<std::string>& v, std::vector<std::string>& cats) {
  if (!v) return std::numeric_limits<double>::quiet_NaN();
  auto it = std::find(cats.begin(), cats.end(), *v);
  if (it == cats.end()) {
    cats.push_back(*v);
    return static_cast<double>(cats.size() - 1);
  }
  return static_cast<double>(it - cats.begin());
}

void constrain(ImputeColumn& col) {
  for (double& v : col.values) {
    if (std::isnan(v)) continue;
    if (col.categorical) {
      double hi = static_cast<double>(col.categories.size()) - 1.0;
      v = std::clamp(std::round(v), 0.0, hi);
    } else if (col.name == "floor_count") {
      v = std::max(1.0, std::round(v));
    } else if (col.name == "construction_year") {
      v = std::clamp(std::round(v), 1800.0, static_cast<double>(kCurrentYear));
    } else if (col.name == "energy_std") {
      v = std::max(0.0, v);
    } else if (col.name == "height") {
      v = std::max(0.1, v);
    } else if (col.name == "epc") {
      v = std::clamp(std::round(v), 1.0, 7.0);
    }
  }
}

double simpleFill(const ImputeColumn& col) {
  std::vector<double> observed;
  for (double v : col.values)
    if (!std::isnan(v)) observed.push_back(v);
  if (col.categorical) {
    std::map<double, int> counts;
    for (double v : observed) ++counts[v];
    double mode = observed.front();
    int best = 0;
    for (const auto& [v, c] : counts)
      if (c > best) {
        best = c;
        mode = v;
      }
    return mode;
  }
  return median(observed);
}

}  // namespace

void imputeAttributes(std::vector<BuildingRecord>& records, const ImputeConfig& cfg,
                      ImputeReport* report) {
  if (records.empty()) return;
  const std::size_t n = records.size();

  std::vector<ImputeColumn> cols;
  auto addNum = [&](const std::string& name, auto getter) {
    ImputeColumn c;
    c.name = name;
    c.values.reserve(n);
    for (const auto& r : records) c.values.push_back(numOrNan(getter(r)));
    cols.push_back(std::move(c));
  };
  auto addCat = [&](const std::string& name, auto getter) {
    ImputeColumn c;
    c.name = name;
    c.categorical = true;
    c.values.reserve(n);
    for (const auto& r : records) c.values.push_back(catCode(getter(r), c.categories));
    if (c.categories.empty()) c.categories.push_back("unknown");
    cols.push_back(std::move(c));
  };
  addNum("height", [](const BuildingRecord& r) { return r.height; });
  addNum("floor_count", [](const BuildingRecord& r) { return r.floor_count; });
  addNum("construction_year", [](const BuildingRecord& r) { return r.construction_year; });
  addNum("epc", [](const BuildingRecord& r) { return r.epc; });
  addNum("energy_mean", [](const BuildingRecord& r) { return r.energy_mean; });
  addNum("energy_std", [](const BuildingRecord& r) { return r.energy_std; });
  addCat("wall_type", [](const BuildingRecord& r) { return r.wall_type; });
  addCat("wall_material", [](const BuildingRecord& r) { return r.wall_material; });
  addCat("insulation", [](const BuildingRecord& r) { return r.insulation; });
  addCat("glazing", [](const BuildingRecord& r) { return r.glazing; });

  std::vector<int> simple_cols, chained_cols;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    double miss = cols[j].missingFraction();
    std::string method = "none";
    if (miss > 0.0) {
      if (miss > 0.7)
        throw InsufficientData("column '" + cols[j].name +
                               "' has fewer than 30% observed values");
      if (miss <= cfg.simple_threshold) {
        simple_cols.push_back(static_cast<int>(j));
        method = "simple";
      } else {
        chained_cols.push_back(static_cast<int>(j));
        method = "chained";
      }
    }
    if (report) report->method_per_column[cols[j].name] = method;
  }

  std::vector<std::vector<bool>> was_missing(cols.size(), std::vector<bool>(n, false));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) was_missing[j][i] = std::isnan(cols[j].values[i]);

  for (int j : simple_cols) {
    double fill = simpleFill(cols[j]);
    for (std::size_t i = 0; i < n; ++i)
      if (was_missing[j][i]) cols[j].values[i] = fill;
    constrain(cols[j]);
  }

  if (!chained_cols.empty()) {
    // context predictors shared across all regressions
    std::vector<double> usage_col(n), area_col(n), compact_col(n);
    for (std::size_t i = 0; i < n; ++i) {
      usage_col[i] = static_cast<double>(static_cast<int>(records[i].usage));
      auto m = geoplane::footprintMetrics(records[i].polygon);
      area_col[i] = m.area;
      compact_col[i] = m.compactness;
    }

    // initialize chained columns with the simple fill, then cycle
    for (int j : chained_cols) {
      double fill = simpleFill(cols[j]);
      for (std::size_t i = 0; i < n; ++i)
        if (was_missing[j][i]) cols[j].values[i] = fill;
    }

    forest::GbRegConfig reg_cfg;
    reg_cfg.n_rounds = 60;
    reg_cfg.max_leaves = 15;
    reg_cfg.min_samples_leaf = 5;
    reg_cfg.seed = cfg.seed;

    int iter = 0;
    for (; iter < cfg.max_iterations; ++iter) {
      double max_change = 0.0;
      for (int j : chained_cols) {
        // assemble the predictor matrix from all other columns
        forest::FeatureSchema schema;
        std::vector<int> pred_cols;
        for (std::size_t k = 0; k < cols.size(); ++k) {
          if (static_cast<int>(k) == j) continue;
          schema.names.push_back(cols[k].name);
          bool cat = cols[k].categorical && cols[k].categories.size() <= 32;
          schema.kinds.push_back(cat ? forest::FeatureKind::categorical
                                     : forest::FeatureKind::numeric);
          schema.n_categories.push_back(cat ? static_cast<int>(cols[k].categories.size())
                                            : 0);
          pred_cols.push_back(static_cast<int>(k));
        }
        schema.names.insert(schema.names.end(), {"usage", "area", "compactness"});
        schema.kinds.insert(schema.kinds.end(),
                            {forest::FeatureKind::categorical,
                             forest::FeatureKind::numeric, forest::FeatureKind::numeric});
        schema.n_categories.insert(schema.n_categories.end(), {4, 0, 0});

        forest::Matrix train_X, miss_X;
        std::vector<double> train_y;
        std::vector<std::size_t> miss_rows;
        for (std::size_t i = 0; i < n; ++i) {
          forest::Row row;
          for (int k : pred_cols) row.push_back(cols[k].values[i]);
          row.push_back(usage_col[i]);
          row.push_back(area_col[i]);
          row.push_back(compact_col[i]);
          if (was_missing[j][i]) {
            miss_X.push_back(std::move(row));
            miss_rows.push_back(i);
          } else {
            train_X.push_back(std::move(row));
            train_y.push_back(cols[j].values[i]);
          }
        }
        if (train_X.empty() || miss_X.empty()) continue;

        forest::GbRegressor model =
            forest::trainGBRegressor(train_X, train_y, schema, reg_cfg);

        double sd = 0.0, mean = 0.0;
        for (double v : train_y) mean += v;
        mean /= train_y.size();
        for (double v : train_y) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / train_y.size());

        for (std::size_t m = 0; m < miss_rows.size(); ++m) {
          double pred = model.predict(miss_X[m]);
          double& cell = cols[j].values[miss_rows[m]];
          max_change = std::max(max_change, std::fabs(pred - cell) / (sd + 1e-9));
          cell = pred;
        }
        constrain(cols[j]);
      }
      if (max_change < cfg.tolerance) {
        ++iter;
        break;
      }
    }
    if (report) report->iterations = iter;
  }

  for (auto& c : cols) constrain(c);

  // write back
  for (std::size_t i = 0; i < n; ++i) {
    BuildingRecord& r = records[i];
    r.height = cols[0].values[i];
    r.floor_count = static_cast<int>(cols[1].values[i]);
    r.construction_year = static_cast<int>(cols[2].values[i]);
    r.epc = static_cast<int>(cols[3].values[i]);
    r.energy_mean = cols[4].values[i];
    r.energy_std = cols[5].values[i];
    r.wall_type = cols[6].categories[static_cast<int>(cols[6].values[i])];
    r.wall_material = cols[7].categories[static_cast<int>(cols[7].values[i])];
    r.insulation = cols[8].categories[static_cast<int>(cols[8].values[i])];
    r.glazing = cols[9].categories[static_cast<int>(cols[9].values[i])];
  }
}

// ---------------------------------------------------------------------------

EngineeredFeatures engineerFeatures(const BuildingRecord& record,
                                    const FeatureConfig& cfg) {
  if (!record.height || !record.floor_count)
    throw PipelineError("engineerFeatures: record '" + record.id +
                        "' incomplete (run imputation first)");
  EngineeredFeatures e;
  e.metrics = geoplane::footprintMetrics(record.polygon);
  double unit_area = record.usage == Usage::residential ? cfg.residential_unit_area
                                                        : cfg.nonresidential_unit_area;
  int rooms_per_floor =
      std::max(1, static_cast<int>(std::lround(e.metrics.area / unit_area)));
  e.wall_to_wall = std::sqrt(e.metrics.area / rooms_per_floor);
  e.inner_wall_count = (rooms_per_floor - 1) * *record.floor_count;
  e.floor_to_ceiling = std::clamp(*record.height / *record.floor_count,
                                  cfg.floor_to_ceiling_min, cfg.floor_to_ceiling_max);
  return e;
}

// ---------------------------------------------------------------------------

void CodeBook::fit(const std::string& column, const std::vector<std::string>& values) {
  std::set<std::string> uniq(values.begin(), values.end());
  columns_[column] = std::vector<std::string>(uniq.begin(), uniq.end());
}

int CodeBook::encode(const std::string& column, const std::string& value,
                     bool* unknown) const {
  auto it = columns_.find(column);
  if (it == columns_.end()) throw ConfigError("code book has no column '" + column + "'");
  auto pos = std::find(it->second.begin(), it->second.end(), value);
  if (pos == it->second.end()) {
    if (unknown) *unknown = true;
    return 0;  // reserved "other"
  }
  return static_cast<int>(pos - it->second.begin()) + 1;
}

std::string CodeBook::decode(const std::string& column, int code) const {
  auto it = columns_.find(column);
  if (it == columns_.end()) throw ConfigError("code book has no column '" + column + "'");
  if (code == 0) return "other";
  if (code < 1 || code > static_cast<int>(it->second.size()))
    throw ConfigError("code out of range for column '" + column + "'");
  return it->second[code - 1];
}

int CodeBook::cardinality(const std::string& column) const {
  auto it = columns_.find(column);
  if (it == columns_.end()) throw ConfigError("code book has no column '" + column + "'");
  return static_cast<int>(it->second.size()) + 1;
}

nlohmann::ordered_json CodeBook::toJson() const {
  nlohmann::ordered_json j;
  for (const auto& [col, cats] : columns_) j[col] = cats;
  return j;
}

CodeBook CodeBook::fromJson(const nlohmann::json& j) {
  CodeBook cb;
  for (auto it = j.begin(); it != j.end(); ++it)
    cb.columns_[it.key()] = it.value().get<std::vector<std::string>>();
  return cb;
}

CodeBook fitCodeBook(const std::vector<BuildingRecord>& records,
                     const std::vector<int>& bands) {
  CodeBook cb;
  auto collect = [&](const std::string& column, auto getter) {
    std::vector<std::string> vals;
    for (const auto& r : records)
      if (auto v = getter(r)) vals.push_back(*v);
    cb.fit(column, vals);
  };
  collect("wall_type", [](const BuildingRecord& r) { return r.wall_type; });
  collect("wall_material", [](const BuildingRecord& r) { return r.wall_material; });
  collect("insulation", [](const BuildingRecord& r) { return r.insulation; });
  collect("glazing", [](const BuildingRecord& r) { return r.glazing; });
  std::vector<std::string> band_vals;
  for (int b : bands) band_vals.push_back(std::to_string(b));
  cb.fit("band", band_vals);
  return cb;
}

// ---------------------------------------------------------------------------

forest::FeatureSchema featureSchema(Task task, const CodeBook& cb) {
  forest::FeatureSchema s;
  auto num = [&](const std::string& name) {
    s.names.push_back(name);
    s.kinds.push_back(forest::FeatureKind::numeric);
    s.n_categories.push_back(0);
  };
  auto cat = [&](const std::string& name, int card) {
    s.names.push_back(name);
    s.kinds.push_back(forest::FeatureKind::categorical);
    s.n_categories.push_back(card);
  };
  cat("band", cb.cardinality("band"));
  num("energy_mean");
  num("energy_std");
  cat("usage", 4);
  if (task == Task::O2I) cat("wall_type", cb.cardinality("wall_type"));
  cat("wall_material", cb.cardinality("wall_material"));
  if (task == Task::O2I) {
    cat("insulation", cb.cardinality("insulation"));
    cat("glazing", cb.cardinality("glazing"));
  }
  num("construction_year");
  num("height");
  num("area");
  if (task == Task::O2I) {
    num("vertex_count");
  } else {
    num("inner_wall_count");
    num("floor_count");
    num("wall_to_wall");
    num("floor_to_ceiling");
  }
  num("compactness");
  num("epc");
  s.validate();
  return s;
}

forest::Row featureRow(const BuildingRecord& r, const EngineeredFeatures& eng, int band,
                       Task task, const CodeBook& cb, bool* unknown_category) {
  if (!r.height || !r.floor_count || !r.construction_year || !r.epc || !r.energy_mean ||
      !r.energy_std || !r.wall_type || !r.wall_material || !r.insulation || !r.glazing)
    throw PipelineError("featureRow: record '" + r.id + "' incomplete");
  forest::Row row;
  row.push_back(cb.encode("band", std::to_string(band), unknown_category));
  row.push_back(*r.energy_mean);
  row.push_back(*r.energy_std);
  row.push_back(static_cast<double>(static_cast<int>(r.usage)));
  if (task == Task::O2I)
    row.push_back(cb.encode("wall_type", *r.wall_type, unknown_category));
  row.push_back(cb.encode("wall_material", *r.wall_material, unknown_category));
  if (task == Task::O2I) {
    row.push_back(cb.encode("insulation", *r.insulation, unknown_category));
    row.push_back(cb.encode("glazing", *r.glazing, unknown_category));
  }
  row.push_back(static_cast<double>(*r.construction_year));
  row.push_back(*r.height);
  row.push_back(eng.metrics.area);
  if (task == Task::O2I) {
    row.push_back(static_cast<double>(eng.metrics.vertex_count));
  } else {
    row.push_back(static_cast<double>(eng.inner_wall_count));
    row.push_back(static_cast<double>(*r.floor_count));
    row.push_back(eng.wall_to_wall);
    row.push_back(eng.floor_to_ceiling);
  }
  row.push_back(eng.metrics.compactness);
  row.push_back(static_cast<double>(*r.epc));
  return row;
}

}  // namespace rfloss::dataset
