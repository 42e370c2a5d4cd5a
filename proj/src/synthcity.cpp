#include "rfloss/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace rfloss::synthcity {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

const char* kClassNames[3] = {"low", "medium", "high"};

int noisyClassAttr(Rng& rng, int cls, bool deterministic) {
  if (deterministic || rng.uniform() >= 0.05) return cls;
  // crossover: pick one of the other two classes
  int other = static_cast<int>(rng.below(2));
  return other >= cls ? other + 1 : other;
}

}  // namespace

Scenario generateScenario(const SynthConfig& cfg) {
  if (cfg.n_buildings < 10) throw ConfigError("n_buildings must be >= 10");
  if (cfg.n_cells < 1) throw ConfigError("n_cells must be >= 1");
  if (cfg.bands.empty()) throw ConfigError("at least one band is required");

  Scenario sc;
  sc.config = cfg;
  sc.projection = {-0.09, 51.515};

  Rng rng(deriveSeed(cfg.seed, "synthcity"));

  const double max_side = 32.0;
  const double pitch = max_side + cfg.street_width;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.n_buildings))));
  const double extent = cols * pitch;

  for (int b = 0; b < cfg.n_buildings; ++b) {
    const int o2i_class = static_cast<int>(rng.below(3));
    const int i2i_class = static_cast<int>(rng.below(3));

    double w = rng.uniform(12.0, 28.0);
    double h = rng.uniform(12.0, 28.0);
    double x0 = (b % cols) * pitch + rng.uniform(0.0, max_side - w);
    double y0 = (b / cols) * pitch + rng.uniform(0.0, max_side - h);

    std::vector<geoplane::Point> ring;
    if (rng.uniform() < 0.5) {
      ring = {{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h}, {x0, y0 + h}};
    } else {
      // jittered variant: perturbed edge midpoints between the corners
      auto mid = [&](geoplane::Point a, geoplane::Point b) {
        double nx = -(b.y - a.y), ny = b.x - a.x;
        double len = std::hypot(nx, ny);
        double off = rng.uniform(-1.0, 1.0) * 0.08 * len;
        return geoplane::Point{(a.x + b.x) / 2 + nx / len * off,
                               (a.y + b.y) / 2 + ny / len * off};
      };
      geoplane::Point c0{x0, y0}, c1{x0 + w, y0}, c2{x0 + w, y0 + h}, c3{x0, y0 + h};
      ring = {c0, mid(c0, c1), c1, mid(c1, c2), c2, mid(c2, c3), c3, mid(c3, c0)};
    }

    dataset::BuildingRecord rec{"b" + std::to_string(b), geoplane::Polygon(ring)};

    // the I2I class shows in the storey height: open-plan lofty interiors
    // attenuate least, dense low-ceiling partitioning the most
    int floors = 1 + static_cast<int>(rng.below(8));
    static const double kCeiling[3][2] = {{3.2, 3.6}, {2.75, 3.1}, {2.3, 2.65}};
    rec.floor_count = floors;
    rec.height =
        floors * rng.uniform(kCeiling[i2i_class][0], kCeiling[i2i_class][1]);

    // envelope attributes follow the O2I class
    static const char* kInsulation[3] = {"none", "partial", "full"};
    static const char* kGlazing[3] = {"single", "double", "low-e"};
    rec.insulation =
        kInsulation[noisyClassAttr(rng, o2i_class, cfg.deterministic_attributes)];
    rec.glazing =
        kGlazing[noisyClassAttr(rng, o2i_class, cfg.deterministic_attributes)];

    // In deterministic mode the class is a function of insulation+glazing
    // alone; every other attribute decouples from it.
    int attr_class = cfg.deterministic_attributes ? static_cast<int>(rng.below(3))
                                                  : o2i_class;
    if (attr_class == 0)
      rec.construction_year = 1850 + static_cast<int>(rng.below(96));   // 1850-1945
    else if (attr_class == 1)
      rec.construction_year = 1945 + static_cast<int>(rng.below(56));   // 1945-2000
    else
      rec.construction_year = 1998 + static_cast<int>(rng.below(28));   // 1998-2025

    if (attr_class == 2)
      rec.epc = 1 + static_cast<int>(rng.below(2));
    else if (attr_class == 1)
      rec.epc = 3 + static_cast<int>(rng.below(2));
    else
      rec.epc = 5 + static_cast<int>(rng.below(3));
    rec.energy_mean = 60.0 + 25.0 * *rec.epc + 10.0 * rng.normal();
    rec.energy_std = rng.uniform(5.0, 25.0);

    static const char* kWallTypes[3] = {"solid", "cavity", "curtain"};
    static const char* kWallMaterials[4] = {"brick", "concrete", "glass", "stone"};
    rec.wall_type = attr_class == 2 && rng.uniform() < 0.5
                        ? kWallTypes[2]
                        : kWallTypes[rng.below(3)];
    rec.wall_material = attr_class == 2 && rng.uniform() < 0.4
                            ? kWallMaterials[2]
                            : kWallMaterials[rng.below(4)];

    double u = rng.uniform();
    rec.usage = u < 0.45   ? dataset::Usage::residential
                : u < 0.75 ? dataset::Usage::commercial
                : u < 0.90 ? dataset::Usage::civic
                           : dataset::Usage::other;

    sc.buildings.push_back({std::move(rec), o2i_class, i2i_class});
  }

  for (int c = 0; c < cfg.n_cells; ++c) {
    Cell cell;
    cell.id = "cell" + std::to_string(c);
    cell.position = {rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
    cell.bands = cfg.bands;
    sc.cells.push_back(std::move(cell));
  }
  return sc;
}

double meanRsrp(const Scenario& sc, const geoplane::Point& pos, std::size_t cell,
                bool indoor, std::size_t building) {
  const SynthConfig& cfg = sc.config;
  double d = std::max(1.0, std::hypot(pos.x - sc.cells[cell].position.x,
                                      pos.y - sc.cells[cell].position.y));
  double p = cfg.reference_power - 10.0 * cfg.path_loss_exponent * std::log10(d);
  if (indoor) {
    const TrueBuilding& tb = sc.buildings[building];
    p -= cfg.penetration_db[tb.o2i_class];
    p -= cfg.interior_rate_db_per_m[tb.i2i_class] *
         geoplane::boundaryDistance(tb.record.polygon, pos);
  }
  return p;
}

EmittedSamples emitSamples(const Scenario& sc) {
  const SynthConfig& cfg = sc.config;
  Rng rng(deriveSeed(cfg.seed, "emit"));
  EmittedSamples out;

  auto nearestCell = [&](const geoplane::Point& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sc.cells.size(); ++c) {
      double d = std::hypot(p.x - sc.cells[c].position.x, p.y - sc.cells[c].position.y);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  };

  std::size_t counter = 0;
  for (std::size_t b = 0; b < sc.buildings.size(); ++b) {
    const auto& poly = sc.buildings[b].record.polygon;
    const auto& bbox = poly.bbox();
    int n = std::max(2, static_cast<int>(std::lround(
                            cfg.samples_per_building_mean *
                            (1.0 + 0.15 * rng.normal()))));
    int n_in = std::max(1, static_cast<int>(std::lround(cfg.indoor_fraction * n)));
    int n_out = std::max(1, n - n_in);

    for (int s = 0; s < n_in + n_out; ++s) {
      bool indoor = s < n_in;
      geoplane::Point true_pos;
      if (indoor) {
        do {
          true_pos = {rng.uniform(bbox.min_x, bbox.max_x),
                      rng.uniform(bbox.min_y, bbox.max_y)};
        } while (!geoplane::containsPoint(poly, true_pos));
      } else {
        // on the street ring surrounding the lot
        double off = rng.uniform(1.5, std::max(2.0, cfg.street_width * 0.5));
        int side = static_cast<int>(rng.below(4));
        double tx = rng.uniform(bbox.min_x, bbox.max_x);
        double ty = rng.uniform(bbox.min_y, bbox.max_y);
        switch (side) {
          case 0: true_pos = {tx, bbox.max_y + off}; break;
          case 1: true_pos = {tx, bbox.min_y - off}; break;
          case 2: true_pos = {bbox.max_x + off, ty}; break;
          default: true_pos = {bbox.min_x - off, ty}; break;
        }
      }

      std::size_t cell = nearestCell(true_pos);
      int band = sc.cells[cell].bands[rng.below(sc.cells[cell].bands.size())];
      double sigma = rng.uniform(cfg.pos_error_min, cfg.pos_error_max);

      dataset::MeasurementSample sample;
      sample.id = "s" + std::to_string(counter++);
      sample.position = {true_pos.x + sigma * rng.normal(),
                         true_pos.y + sigma * rng.normal()};
      sample.accuracy = sigma;
      sample.cell_id = sc.cells[cell].id;
      sample.band = band;
      sample.rsrp = meanRsrp(sc, true_pos, cell, indoor, b) +
                    cfg.shadowing_sigma * rng.normal();
      sample.rsrp = std::clamp(sample.rsrp, -159.5, -40.5);
      sample.timestamp = 1660000000.0 + static_cast<double>(counter);

      out.truth.push_back({sample.id, indoor, sc.buildings[b].record.id, true_pos});
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

void exportScenario(const Scenario& sc, const EmittedSamples& emitted,
                    const std::string& out_dir, const std::string& header) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto& proj = sc.projection;

  // buildings.geojson
  {
    nlohmann::ordered_json doc;
    doc["type"] = "FeatureCollection";
    doc["meta"] = header;
    nlohmann::ordered_json features = nlohmann::ordered_json::array();
    for (const auto& tb : sc.buildings) {
      nlohmann::ordered_json f;
      f["type"] = "Feature";
      f["properties"] = {{"id", tb.record.id}};
      nlohmann::ordered_json ring = nlohmann::ordered_json::array();
      auto push = [&](const geoplane::Point& p) {
        auto [lon, lat] = proj.toLonLat(p);
        ring.push_back({lon, lat});
      };
      for (const auto& p : tb.record.polygon.exterior()) push(p);
      push(tb.record.polygon.exterior().front());  // close the ring
      f["geometry"] = {{"type", "Polygon"},
                       {"coordinates", nlohmann::ordered_json::array({ring})}};
      features.push_back(std::move(f));
    }
    doc["features"] = std::move(features);
    std::ofstream os(fs::path(out_dir) / "buildings.geojson");
    os << doc.dump(2) << "\n";
  }

  auto writeTable = [&](const std::string& name, const dataset::CsvTable& t) {
    dataset::CsvTable with_header = t;
    with_header.comments.insert(with_header.comments.begin(), "# " + header);
    dataset::writeCsv((fs::path(out_dir) / name).string(), with_header);
  };

  // metadata.csv
  {
    dataset::CsvTable t;
    t.header = {"building_id", "height_m",     "floor_count", "construction_year",
                "usage",       "wall_type",    "wall_material", "insulation",
                "glazing",     "epc",          "energy_mean", "energy_std"};
    for (const auto& tb : sc.buildings) {
      const auto& r = tb.record;
      t.rows.push_back({r.id, fmt("%.4f", *r.height), std::to_string(*r.floor_count),
                        std::to_string(*r.construction_year), dataset::usageName(r.usage),
                        *r.wall_type, *r.wall_material, *r.insulation, *r.glazing,
                        std::to_string(*r.epc), fmt("%.4f", *r.energy_mean),
                        fmt("%.4f", *r.energy_std)});
    }
    writeTable("metadata.csv", t);
  }

  // samples.csv
  {
    dataset::CsvTable t;
    t.header = {"id",     "lon",    "lat",      "accuracy_m",
                "cell_id", "earfcn", "rsrp_dbm", "timestamp"};
    for (const auto& s : emitted.samples) {
      auto [lon, lat] = proj.toLonLat(s.position);
      t.rows.push_back({s.id, fmt("%.9f", lon), fmt("%.9f", lat),
                        fmt("%.3f", s.accuracy), s.cell_id, std::to_string(s.band),
                        fmt("%.4f", s.rsrp), fmt("%.0f", s.timestamp)});
    }
    writeTable("samples.csv", t);
  }

  // truth tables (test harness channel; the pipeline never reads these)
  {
    dataset::CsvTable t;
    t.header = {"sample_id", "indoor", "building_id"};
    for (const auto& tr : emitted.truth)
      t.rows.push_back({tr.sample_id, tr.indoor ? "1" : "0", tr.building_id});
    writeTable("truth_samples.csv", t);
  }
  {
    dataset::CsvTable t;
    t.header = {"building_id", "band", "o2i_class", "i2i_class"};
    for (const auto& tb : sc.buildings)
      for (int band : sc.config.bands)
        t.rows.push_back({tb.record.id, std::to_string(band),
                          kClassNames[tb.o2i_class], kClassNames[tb.i2i_class]});
    writeTable("truth_buildings.csv", t);
  }
}

}  // namespace rfloss::synthcity
