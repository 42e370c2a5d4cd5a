#include "rfloss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace rfloss::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

int classFromName(const std::string& s) {
  if (s == "low") return 0;
  if (s == "medium") return 1;
  if (s == "high") return 2;
  throw ParseError("unknown class name: " + s);
}

template <typename T>
T getOr(const json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

void writeJsonFile(const std::string& path, const ordered_json& doc) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << doc.dump(2) << "\n";
}

json readJsonFile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string resolve(const std::string& explicit_path, const std::string& out,
                    const char* fallback) {
  return explicit_path.empty() ? (fs::path(out) / fallback).string() : explicit_path;
}

struct ObsRow {
  dataset::Task task;
  std::string building_id;
  int band = 0;
  std::string cell_id;
  std::string sample1, sample2;
  double distance = 0.0;
  double loss = 0.0;
  int cls = 0;
};

std::vector<ObsRow> readObservations(const std::string& path) {
  dataset::CsvTable t = dataset::readCsv(path);
  int c_task = t.column("task"), c_b = t.column("building_id"), c_band = t.column("band");
  int c_cell = t.column("cell_id"), c_s1 = t.column("sample1"), c_s2 = t.column("sample2");
  int c_d = t.column("distance_m"), c_l = t.column("loss_db_per_m"),
      c_c = t.column("class");
  if (c_task < 0 || c_b < 0 || c_band < 0 || c_d < 0 || c_l < 0 || c_c < 0)
    throw ParseError(path + ": missing observation columns");
  std::vector<ObsRow> out;
  for (const auto& r : t.rows) {
    ObsRow o;
    o.task = dataset::taskFromName(r[c_task]);
    o.building_id = r[c_b];
    o.band = std::stoi(r[c_band]);
    if (c_cell >= 0) o.cell_id = r[c_cell];
    if (c_s1 >= 0) o.sample1 = r[c_s1];
    if (c_s2 >= 0) o.sample2 = r[c_s2];
    o.distance = std::stod(r[c_d]);
    o.loss = std::stod(r[c_l]);
    o.cls = classFromName(r[c_c]);
    out.push_back(std::move(o));
  }
  return out;
}

// Buildings loaded, imputed and feature-engineered; shared by train/infer.
struct PreparedBuildings {
  std::vector<dataset::BuildingRecord> records;
  std::vector<dataset::EngineeredFeatures> engineered;
  std::map<std::string, std::size_t> index;
};

PreparedBuildings prepareBuildings(const PipelineConfig& cfg) {
  PreparedBuildings pb;
  std::string bpath = resolve(cfg.paths.buildings, cfg.paths.out, "buildings.geojson");
  std::string mpath = resolve(cfg.paths.metadata, cfg.paths.out, "metadata.csv");
  pb.records = dataset::loadBuildings(bpath, mpath);
  dataset::ImputeConfig icfg = cfg.impute;
  icfg.seed = deriveSeed(cfg.seed, "impute");
  dataset::imputeAttributes(pb.records, icfg);
  for (std::size_t i = 0; i < pb.records.size(); ++i) {
    pb.engineered.push_back(dataset::engineerFeatures(pb.records[i], cfg.features));
    pb.index[pb.records[i].id] = i;
  }
  return pb;
}

forest::EnsembleModel trainByKind(const PipelineConfig& cfg, const std::string& tag,
                                  const forest::Matrix& rows,
                                  const std::vector<int>& labels,
                                  const std::vector<double>& weights,
                                  const forest::FeatureSchema& schema) {
  forest::ModelKind kind = forest::modelKindFromName(cfg.model);
  std::uint64_t seed = deriveSeed(cfg.seed, "train-" + tag);
  if (kind == forest::ModelKind::random_forest) {
    forest::RfConfig c = cfg.rf;
    c.seed = seed;
    return forest::trainRandomForest(rows, labels, weights, schema, c);
  }
  forest::GbConfig gc = cfg.gb;
  gc.seed = seed;
  if (kind == forest::ModelKind::gb_levelwise)
    return forest::trainGradientBoosting(rows, labels, weights, schema,
                                         forest::GrowthStrategy::level_wise, gc);
  if (kind == forest::ModelKind::gb_leafwise)
    return forest::trainGradientBoosting(rows, labels, weights, schema,
                                         forest::GrowthStrategy::leaf_wise, gc);
  forest::RfConfig rc = cfg.rf;
  rc.seed = seed;
  return forest::trainVoting(rows, labels, weights, schema, rc, gc);
}

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig
// ---------------------------------------------------------------------------

ordered_json PipelineConfig::toJson() const {
  ordered_json j;
  j["paths"] = {{"buildings", paths.buildings}, {"metadata", paths.metadata},
                {"samples", paths.samples},     {"out", paths.out},
                {"truth", paths.truth}};
  j["task"] = task;
  j["mode"] = mode;
  j["model"] = model;
  j["seed"] = seed;
  j["synth"] = {{"n_buildings", synth.n_buildings},
                {"n_cells", synth.n_cells},
                {"samples_per_building_mean", synth.samples_per_building_mean},
                {"indoor_fraction", synth.indoor_fraction},
                {"street_width", synth.street_width},
                {"shadowing_sigma", synth.shadowing_sigma},
                {"pos_error_min", synth.pos_error_min},
                {"pos_error_max", synth.pos_error_max},
                {"penetration_db", synth.penetration_db},
                {"interior_rate_db_per_m", synth.interior_rate_db_per_m},
                {"bands", synth.bands},
                {"reference_power", synth.reference_power},
                {"path_loss_exponent", synth.path_loss_exponent},
                {"deterministic_attributes", synth.deterministic_attributes}};
  j["pair"] = {{"d_min", pair.d_min},
               {"d_max", pair.d_max},
               {"max_pairs_per_indoor", pair.max_pairs_per_indoor},
               {"max_position_sigma", pair.max_position_sigma},
               {"outdoor_max_overlap", pair.outdoor_max_overlap},
               {"o2i_max_depth", pair.o2i_max_depth},
               {"target_distance", pair.target_distance},
               {"i2i_min_gap_ratio", pair.i2i_min_gap_ratio},
               {"i2i_d_min", pair.i2i_d_min}};
  j["quantizer"] = {{"k", quantizer.k},
                    {"k_sweep_lo", quantizer.k_sweep_lo},
                    {"k_sweep_hi", quantizer.k_sweep_hi},
                    {"restarts", quantizer.restarts},
                    {"silhouette_subsample", quantizer.silhouette_subsample}};
  j["impute"] = {{"simple_threshold", impute.simple_threshold},
                 {"max_iterations", impute.max_iterations},
                 {"tolerance", impute.tolerance}};
  j["features"] = {{"residential_unit_area", features.residential_unit_area},
                   {"nonresidential_unit_area", features.nonresidential_unit_area},
                   {"floor_to_ceiling_min", features.floor_to_ceiling_min},
                   {"floor_to_ceiling_max", features.floor_to_ceiling_max}};
  j["ssl"] = {{"confidence_threshold", ssl_cfg.confidence_threshold},
              {"max_iterations", ssl_cfg.max_iterations},
              {"per_iteration_cap", ssl_cfg.per_iteration_cap},
              {"rule_weight", ssl_cfg.rule_weight}};
  j["rf"] = {{"n_trees", rf.n_trees},
             {"max_depth", rf.max_depth},
             {"min_samples_leaf", rf.min_samples_leaf},
             {"bootstrap", rf.bootstrap},
             {"class_weights", rf.class_weights}};
  j["gb"] = {{"n_rounds", gb.n_rounds},
             {"learning_rate", gb.learning_rate},
             {"max_depth", gb.max_depth},
             {"max_leaves", gb.max_leaves},
             {"min_samples_leaf", gb.min_samples_leaf},
             {"reg_lambda", gb.reg_lambda},
             {"early_stop_patience", gb.early_stop_patience},
             {"val_fraction", gb.val_fraction},
             {"class_weights", gb.class_weights}};
  j["overlap_budget"] = overlap_budget;
  j["test_fraction"] = test_fraction;
  j["hidden_fraction"] = hidden_fraction;
  return j;
}

PipelineConfig PipelineConfig::fromJson(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.buildings = getOr<std::string>(p, "buildings", "");
      c.paths.metadata = getOr<std::string>(p, "metadata", "");
      c.paths.samples = getOr<std::string>(p, "samples", "");
      c.paths.out = getOr<std::string>(p, "out", "out");
      c.paths.truth = getOr<std::string>(p, "truth", "");
    }
    c.task = getOr<std::string>(j, "task", c.task);
    c.mode = getOr<std::string>(j, "mode", c.mode);
    c.model = getOr<std::string>(j, "model", c.model);
    c.seed = getOr<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      c.synth.n_buildings = getOr(s, "n_buildings", c.synth.n_buildings);
      c.synth.n_cells = getOr(s, "n_cells", c.synth.n_cells);
      c.synth.samples_per_building_mean =
          getOr(s, "samples_per_building_mean", c.synth.samples_per_building_mean);
      c.synth.indoor_fraction = getOr(s, "indoor_fraction", c.synth.indoor_fraction);
      c.synth.street_width = getOr(s, "street_width", c.synth.street_width);
      c.synth.shadowing_sigma = getOr(s, "shadowing_sigma", c.synth.shadowing_sigma);
      c.synth.pos_error_min = getOr(s, "pos_error_min", c.synth.pos_error_min);
      c.synth.pos_error_max = getOr(s, "pos_error_max", c.synth.pos_error_max);
      c.synth.penetration_db = getOr(s, "penetration_db", c.synth.penetration_db);
      c.synth.interior_rate_db_per_m =
          getOr(s, "interior_rate_db_per_m", c.synth.interior_rate_db_per_m);
      c.synth.bands = getOr(s, "bands", c.synth.bands);
      c.synth.reference_power = getOr(s, "reference_power", c.synth.reference_power);
      c.synth.path_loss_exponent =
          getOr(s, "path_loss_exponent", c.synth.path_loss_exponent);
      c.synth.deterministic_attributes =
          getOr(s, "deterministic_attributes", c.synth.deterministic_attributes);
    }
    if (j.contains("pair")) {
      const auto& p = j.at("pair");
      c.pair.d_min = getOr(p, "d_min", c.pair.d_min);
      c.pair.d_max = getOr(p, "d_max", c.pair.d_max);
      c.pair.max_pairs_per_indoor =
          getOr(p, "max_pairs_per_indoor", c.pair.max_pairs_per_indoor);
      c.pair.outdoor_max_overlap =
          getOr(p, "outdoor_max_overlap", c.pair.outdoor_max_overlap);
      c.pair.o2i_max_depth = getOr(p, "o2i_max_depth", c.pair.o2i_max_depth);
      c.pair.max_position_sigma =
          getOr(p, "max_position_sigma", c.pair.max_position_sigma);
      c.pair.target_distance = getOr(p, "target_distance", c.pair.target_distance);
      c.pair.i2i_min_gap_ratio =
          getOr(p, "i2i_min_gap_ratio", c.pair.i2i_min_gap_ratio);
      c.pair.i2i_d_min = getOr(p, "i2i_d_min", c.pair.i2i_d_min);
    }
    if (j.contains("quantizer")) {
      const auto& q = j.at("quantizer");
      c.quantizer.k = getOr(q, "k", c.quantizer.k);
      c.quantizer.k_sweep_lo = getOr(q, "k_sweep_lo", c.quantizer.k_sweep_lo);
      c.quantizer.k_sweep_hi = getOr(q, "k_sweep_hi", c.quantizer.k_sweep_hi);
      c.quantizer.restarts = getOr(q, "restarts", c.quantizer.restarts);
      c.quantizer.silhouette_subsample =
          getOr(q, "silhouette_subsample", c.quantizer.silhouette_subsample);
    }
    if (j.contains("impute")) {
      const auto& i = j.at("impute");
      c.impute.simple_threshold = getOr(i, "simple_threshold", c.impute.simple_threshold);
      c.impute.max_iterations = getOr(i, "max_iterations", c.impute.max_iterations);
      c.impute.tolerance = getOr(i, "tolerance", c.impute.tolerance);
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      c.features.residential_unit_area =
          getOr(f, "residential_unit_area", c.features.residential_unit_area);
      c.features.nonresidential_unit_area =
          getOr(f, "nonresidential_unit_area", c.features.nonresidential_unit_area);
      c.features.floor_to_ceiling_min =
          getOr(f, "floor_to_ceiling_min", c.features.floor_to_ceiling_min);
      c.features.floor_to_ceiling_max =
          getOr(f, "floor_to_ceiling_max", c.features.floor_to_ceiling_max);
    }
    if (j.contains("ssl")) {
      const auto& s = j.at("ssl");
      c.ssl_cfg.confidence_threshold =
          getOr(s, "confidence_threshold", c.ssl_cfg.confidence_threshold);
      c.ssl_cfg.max_iterations = getOr(s, "max_iterations", c.ssl_cfg.max_iterations);
      c.ssl_cfg.per_iteration_cap =
          getOr(s, "per_iteration_cap", c.ssl_cfg.per_iteration_cap);
      c.ssl_cfg.rule_weight = getOr(s, "rule_weight", c.ssl_cfg.rule_weight);
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      c.rf.n_trees = getOr(r, "n_trees", c.rf.n_trees);
      c.rf.max_depth = getOr(r, "max_depth", c.rf.max_depth);
      c.rf.min_samples_leaf = getOr(r, "min_samples_leaf", c.rf.min_samples_leaf);
      c.rf.bootstrap = getOr(r, "bootstrap", c.rf.bootstrap);
      c.rf.class_weights = getOr(r, "class_weights", c.rf.class_weights);
    }
    if (j.contains("gb")) {
      const auto& g = j.at("gb");
      c.gb.n_rounds = getOr(g, "n_rounds", c.gb.n_rounds);
      c.gb.learning_rate = getOr(g, "learning_rate", c.gb.learning_rate);
      c.gb.max_depth = getOr(g, "max_depth", c.gb.max_depth);
      c.gb.max_leaves = getOr(g, "max_leaves", c.gb.max_leaves);
      c.gb.min_samples_leaf = getOr(g, "min_samples_leaf", c.gb.min_samples_leaf);
      c.gb.reg_lambda = getOr(g, "reg_lambda", c.gb.reg_lambda);
      c.gb.early_stop_patience =
          getOr(g, "early_stop_patience", c.gb.early_stop_patience);
      c.gb.val_fraction = getOr(g, "val_fraction", c.gb.val_fraction);
      c.gb.class_weights = getOr(g, "class_weights", c.gb.class_weights);
    }
    c.overlap_budget = getOr(j, "overlap_budget", c.overlap_budget);
    c.test_fraction = getOr(j, "test_fraction", c.test_fraction);
    c.hidden_fraction = getOr(j, "hidden_fraction", c.hidden_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return fromJson(j);
}

void PipelineConfig::validate() const {
  if (task != "o2i" && task != "i2i" && task != "both")
    throw ConfigError("task must be o2i, i2i or both");
  if (mode != "sl" && mode != "ssl") throw ConfigError("mode must be sl or ssl");
  forest::modelKindFromName(model);  // throws ConfigError on unknown names
  if (overlap_budget < 256) throw ConfigError("overlap_budget must be >= 256");
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction must lie in (0, 1)");
  if (hidden_fraction < 0.0 || hidden_fraction >= 1.0)
    throw ConfigError("hidden_fraction must lie in [0, 1)");
  if (pair.d_min <= 0.0 || pair.d_max <= pair.d_min)
    throw ConfigError("pair distances must satisfy 0 < d_min < d_max");
  ssl_cfg.validate();
}

std::string PipelineConfig::hash() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(toJson().dump())));
  return buf;
}

std::string PipelineConfig::header() const {
  return "config_hash=" + hash() + " seed=" + std::to_string(seed);
}

std::vector<dataset::Task> PipelineConfig::tasks() const {
  if (task == "o2i") return {dataset::Task::O2I};
  if (task == "i2i") return {dataset::Task::I2I};
  return {dataset::Task::O2I, dataset::Task::I2I};
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void runSynth(const PipelineConfig& cfg) {
  synthcity::SynthConfig scfg = cfg.synth;
  scfg.seed = cfg.seed;
  synthcity::Scenario sc = synthcity::generateScenario(scfg);
  synthcity::EmittedSamples em = synthcity::emitSamples(sc);
  synthcity::exportScenario(sc, em, cfg.paths.out, cfg.header());
}

void runLabel(const PipelineConfig& cfg) {
  fs::create_directories(cfg.paths.out);
  std::string bpath = resolve(cfg.paths.buildings, cfg.paths.out, "buildings.geojson");
  std::string mpath = resolve(cfg.paths.metadata, cfg.paths.out, "metadata.csv");
  std::string spath = resolve(cfg.paths.samples, cfg.paths.out, "samples.csv");

  dataset::Projection proj;
  dataset::LoadReport rep;
  auto buildings = dataset::loadBuildings(bpath, mpath, &proj, &rep);
  auto samples = dataset::loadSamples(spath, proj, &rep);

  std::vector<losslab::IndoorVerdict> verdicts;
  verdicts.reserve(samples.size());
  for (const auto& s : samples)
    verdicts.push_back(losslab::detectIndoor(s, buildings, cfg.overlap_budget));

  dataset::CsvTable obs_table;
  obs_table.comments = {"# " + cfg.header()};
  obs_table.header = {"task",    "building_id", "band",          "cell_id", "sample1",
                      "sample2", "distance_m",  "loss_db_per_m", "class"};

  for (dataset::Task task : cfg.tasks()) {
    losslab::LinkType link =
        task == dataset::Task::O2I ? losslab::LinkType::O2I : losslab::LinkType::I2I;
    auto observations = losslab::pairAndComputeLoss(verdicts, samples, link, cfg.pair);

    std::vector<double> losses;
    losses.reserve(observations.size());
    for (const auto& o : observations) losses.push_back(o.loss);

    losslab::QuantizerConfig qcfg = cfg.quantizer;
    qcfg.seed = deriveSeed(cfg.seed, "quantizer-" + dataset::taskName(task));
    losslab::LossQuantizer quantizer = losslab::fitQuantizer(losses, qcfg);

    auto labeled = losslab::zscoreFilter(losslab::labelLosses(quantizer, observations));
    for (const auto& [o, cls] : labeled) {
      obs_table.rows.push_back({dataset::taskName(task), o.building_id,
                                std::to_string(o.band), o.cell_id, o.sample1, o.sample2,
                                fmt("%.6f", o.distance), fmt("%.9f", o.loss),
                                metrics::className(cls)});
    }

    ordered_json qdoc;
    qdoc["meta"] = cfg.header();
    qdoc["task"] = dataset::taskName(task);
    qdoc["quantizer"] = quantizer.toJson();
    writeJsonFile(
        (fs::path(cfg.paths.out) / ("quantizer_" + dataset::taskName(task) + ".json"))
            .string(),
        qdoc);
  }
  dataset::writeCsv((fs::path(cfg.paths.out) / "observations.csv").string(), obs_table);
}

std::vector<TrainResult> runTrain(const PipelineConfig& cfg) {
  fs::create_directories(cfg.paths.out);
  PreparedBuildings pb = prepareBuildings(cfg);
  auto observations =
      readObservations((fs::path(cfg.paths.out) / "observations.csv").string());

  std::set<int> band_set;
  for (const auto& o : observations) band_set.insert(o.band);
  std::vector<int> bands(band_set.begin(), band_set.end());
  dataset::CodeBook codebook = dataset::fitCodeBook(pb.records, bands);

  std::vector<TrainResult> results;
  for (dataset::Task task : cfg.tasks()) {
    const std::string tag = dataset::taskName(task);
    forest::FeatureSchema schema = dataset::featureSchema(task, codebook);

    std::vector<ObsRow> task_obs;
    std::set<std::string> obs_buildings;
    for (const auto& o : observations)
      if (o.task == task && pb.index.count(o.building_id)) {
        task_obs.push_back(o);
        obs_buildings.insert(o.building_id);
      }
    if (task_obs.empty())
      throw InsufficientData("no observations for task " + tag);

    // building-stratified holdout; hidden_fraction overrides the default split
    std::vector<std::string> shuffled(obs_buildings.begin(), obs_buildings.end());
    Rng split_rng(deriveSeed(cfg.seed, "split-" + tag));
    split_rng.shuffle(shuffled);
    double frac = cfg.hidden_fraction > 0.0 ? cfg.hidden_fraction : cfg.test_fraction;
    std::size_t n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(frac * shuffled.size())));
    std::set<std::string> test_buildings(shuffled.begin(), shuffled.begin() + n_test);

    auto rowFor = [&](const std::string& building, int band) {
      std::size_t i = pb.index.at(building);
      return dataset::featureRow(pb.records[i], pb.engineered[i], band, task, codebook);
    };

    // identical feature rows within a (building, band, class) group collapse
    // to one weighted row
    std::map<std::tuple<std::string, int, int>, int> train_groups;
    std::set<std::pair<std::string, int>> labeled_pairs;
    for (const auto& o : task_obs) {
      if (test_buildings.count(o.building_id)) continue;
      ++train_groups[{o.building_id, o.band, o.cls}];
      labeled_pairs.insert({o.building_id, o.band});
    }
    if (train_groups.empty())
      throw InsufficientData("empty training split for task " + tag);

    forest::Matrix rows;
    std::vector<int> labels;
    std::vector<double> weights;
    for (const auto& [key, count] : train_groups) {
      rows.push_back(rowFor(std::get<0>(key), std::get<1>(key)));
      labels.push_back(std::get<2>(key));
      weights.push_back(static_cast<double>(count));
    }

    ssl::Trainer trainer = [&](const forest::Matrix& r, const std::vector<int>& l,
                               const std::vector<double>& w) {
      return trainByKind(cfg, tag, r, l, w, schema);
    };

    forest::EnsembleModel model;
    std::vector<ssl::PseudoLabelEntry> ledger;
    if (cfg.mode == "ssl") {
      std::vector<ssl::UnlabeledRow> unlabeled;
      for (const auto& rec : pb.records)
        for (int band : bands) {
          if (labeled_pairs.count({rec.id, band})) continue;
          ssl::UnlabeledRow u;
          u.id = rec.id + "|" + std::to_string(band);
          u.features = rowFor(rec.id, band);
          u.record = &rec;
          unlabeled.push_back(std::move(u));
        }
      auto res = ssl::selfTrain(trainer, rows, labels, weights, unlabeled,
                                ssl::defaultRules(), cfg.ssl_cfg);
      model = std::move(res.model);
      ledger = std::move(res.ledger);

      dataset::CsvTable lt;
      lt.comments = {"# " + cfg.header()};
      lt.header = {"row_id", "iteration", "class", "confidence", "rule_delta"};
      for (const auto& e : ledger)
        lt.rows.push_back({e.row_id, std::to_string(e.iteration),
                           metrics::className(e.label), fmt("%.6f", e.confidence),
                           fmt("%.6f", e.rule_delta)});
      dataset::writeCsv(
          (fs::path(cfg.paths.out) / ("pseudo_labels_" + tag + ".csv")).string(), lt);
    } else {
      model = trainer(rows, labels, weights);
    }

    // held-out evaluation: per-observation predictions aggregated per building
    std::vector<metrics::SamplePrediction> preds, truths;
    std::vector<std::vector<double>> sample_dists;
    std::map<std::pair<std::string, int>, std::vector<double>> pair_dist;
    for (const auto& o : task_obs) {
      if (!test_buildings.count(o.building_id)) continue;
      auto key = std::make_pair(o.building_id, o.band);
      auto it = pair_dist.find(key);
      if (it == pair_dist.end())
        it = pair_dist.emplace(key, model.predictProba(rowFor(o.building_id, o.band)))
                 .first;
      const auto& p = it->second;
      int cls = static_cast<int>(p.size()) - 1;
      for (int c = cls - 1; c >= 0; --c)
        if (p[c] > p[cls]) cls = c;
      preds.push_back({o.building_id, o.band, cls, p[cls]});
      truths.push_back({o.building_id, o.band, o.cls, 1.0});
      sample_dists.push_back(p);
    }

    TrainResult tr{task, {}, {}, {}, ledger.size()};
    tr.test_labels = metrics::majorityVote(preds);
    tr.test_truth = metrics::majorityVote(truths);

    std::map<std::pair<std::string, int>, int> truth_by_pair;
    for (const auto& t : tr.test_truth) truth_by_pair[{t.building_id, t.band}] = t.label;
    std::vector<int> y_true, y_pred;
    std::vector<std::vector<double>> building_dists;
    for (const auto& l : tr.test_labels) {
      y_pred.push_back(l.label);
      y_true.push_back(truth_by_pair.at({l.building_id, l.band}));
      building_dists.push_back(pair_dist.at({l.building_id, l.band}));
    }

    metrics::EvalReport rep;
    rep.model = cfg.mode + "-" + cfg.model;
    rep.task = tag;
    rep.detail = metrics::classificationReport(y_true, y_pred);
    rep.accuracy = rep.detail.accuracy;
    rep.macro_f1 = rep.detail.macro_f1;
    rep.mean_entropy_buildings = metrics::buildingEntropy(building_dists);
    rep.mean_entropy_samples = metrics::buildingEntropy(sample_dists);
    rep.mmpp = metrics::mmpp(sample_dists);
    tr.report = rep;

    ordered_json mdoc;
    mdoc["meta"] = cfg.header();
    mdoc["task"] = tag;
    mdoc["mode"] = cfg.mode;
    mdoc["bands"] = bands;
    mdoc["codebook"] = codebook.toJson();
    mdoc["model"] = model.toJson();
    writeJsonFile((fs::path(cfg.paths.out) / ("model_" + tag + ".json")).string(), mdoc);

    ordered_json rdoc;
    rdoc["meta"] = cfg.header();
    rdoc["report"] = rep.toJson();
    rdoc["n_train_rows"] = rows.size();
    rdoc["n_test_buildings"] = test_buildings.size();
    rdoc["n_pseudo_labels"] = tr.n_pseudo_labels;
    writeJsonFile((fs::path(cfg.paths.out) / ("report_train_" + tag + ".json")).string(),
                  rdoc);
    {
      std::ofstream os(fs::path(cfg.paths.out) / ("report_train_" + tag + ".txt"));
      os << "# " << cfg.header() << "\n" << rep.toText();
    }

    results.push_back(std::move(tr));
  }
  return results;
}

void runInfer(const PipelineConfig& cfg) {
  fs::create_directories(cfg.paths.out);
  PreparedBuildings pb = prepareBuildings(cfg);

  // vote counts mirror the per-sample evidence when observations are present
  std::map<std::pair<std::string, int>, int> obs_count[2];
  std::string obs_path = (fs::path(cfg.paths.out) / "observations.csv").string();
  if (fs::exists(obs_path))
    for (const auto& o : readObservations(obs_path))
      ++obs_count[static_cast<int>(o.task)][{o.building_id, o.band}];

  dataset::Projection proj{-0.09, 51.515};
  {
    // reuse the footprint source's projection so map output aligns with it
    std::string bpath = resolve(cfg.paths.buildings, cfg.paths.out, "buildings.geojson");
    dataset::Projection file_proj;
    dataset::loadBuildings(bpath,
                           resolve(cfg.paths.metadata, cfg.paths.out, "metadata.csv"),
                           &file_proj);
    proj = file_proj;
  }

  for (dataset::Task task : cfg.tasks()) {
    const std::string tag = dataset::taskName(task);
    json mdoc =
        readJsonFile((fs::path(cfg.paths.out) / ("model_" + tag + ".json")).string());
    forest::EnsembleModel model = forest::EnsembleModel::fromJson(mdoc.at("model"));
    dataset::CodeBook codebook = dataset::CodeBook::fromJson(mdoc.at("codebook"));
    std::vector<int> bands = mdoc.at("bands").get<std::vector<int>>();

    dataset::CsvTable lt;
    lt.comments = {"# " + cfg.header()};
    lt.header = {"building_id", "band",  "class",    "confidence",
                 "p_low",       "p_medium", "p_high"};

    ordered_json features = ordered_json::array();
    std::array<int, 3> class_counts{0, 0, 0};

    for (std::size_t i = 0; i < pb.records.size(); ++i) {
      const auto& rec = pb.records[i];
      for (int band : bands) {
        forest::Row row =
            dataset::featureRow(rec, pb.engineered[i], band, task, codebook);
        std::vector<double> p = model.predictProba(row);
        int cls = model.predictClass(row);
        ++class_counts[cls];
        lt.rows.push_back({rec.id, std::to_string(band), metrics::className(cls),
                           fmt("%.6f", p[cls]), fmt("%.6f", p[0]), fmt("%.6f", p[1]),
                           fmt("%.6f", p[2])});

        auto itc = obs_count[static_cast<int>(task)].find({rec.id, band});
        int votes = itc == obs_count[static_cast<int>(task)].end() ? 1 : itc->second;
        ordered_json f;
        f["type"] = "Feature";
        ordered_json vote_arr = {0, 0, 0};
        vote_arr[cls] = votes;
        f["properties"] = {{"building_id", rec.id},
                           {"band", band},
                           {"class", metrics::className(cls)},
                           {"votes", vote_arr},
                           {"mean_confidence", p[cls]}};
        ordered_json ring = ordered_json::array();
        auto push = [&](const geoplane::Point& pt) {
          auto [lon, lat] = proj.toLonLat(pt);
          ring.push_back({lon, lat});
        };
        for (const auto& pt : rec.polygon.exterior()) push(pt);
        push(rec.polygon.exterior().front());
        f["geometry"] = {{"type", "Polygon"},
                         {"coordinates", ordered_json::array({ring})}};
        features.push_back(std::move(f));
      }
    }
    dataset::writeCsv((fs::path(cfg.paths.out) / ("labels_" + tag + ".csv")).string(),
                      lt);

    ordered_json map_doc;
    map_doc["type"] = "FeatureCollection";
    map_doc["meta"] = cfg.header();
    map_doc["features"] = std::move(features);
    writeJsonFile((fs::path(cfg.paths.out) / ("map_" + tag + ".geojson")).string(),
                  map_doc);

    int total = class_counts[0] + class_counts[1] + class_counts[2];
    dataset::CsvTable st;
    st.comments = {"# " + cfg.header()};
    st.header = {"class", "count", "share_percent"};
    for (int c = 0; c < 3; ++c)
      st.rows.push_back({metrics::className(c), std::to_string(class_counts[c]),
                         fmt("%.2f", total > 0 ? 100.0 * class_counts[c] / total : 0.0)});
    dataset::writeCsv((fs::path(cfg.paths.out) / ("summary_" + tag + ".csv")).string(),
                      st);
  }
}

std::vector<metrics::EvalReport> runEval(const PipelineConfig& cfg) {
  std::string truth_path = resolve(cfg.paths.truth, cfg.paths.out, "truth_buildings.csv");
  dataset::CsvTable truth = dataset::readCsv(truth_path);
  int c_b = truth.column("building_id"), c_band = truth.column("band");
  int c_cls[2] = {truth.column("o2i_class"), truth.column("i2i_class")};
  if (c_b < 0 || c_band < 0)
    throw ParseError(truth_path + ": missing building_id/band columns");

  std::vector<metrics::EvalReport> reports;
  for (dataset::Task task : cfg.tasks()) {
    const std::string tag = dataset::taskName(task);
    int col = c_cls[static_cast<int>(task)];
    if (col < 0) throw ParseError(truth_path + ": missing " + tag + " class column");

    std::map<std::pair<std::string, int>, int> truth_by_pair;
    for (const auto& r : truth.rows)
      truth_by_pair[{r[c_b], std::stoi(r[c_band])}] = classFromName(r[col]);

    dataset::CsvTable labels =
        dataset::readCsv((fs::path(cfg.paths.out) / ("labels_" + tag + ".csv")).string());
    int l_b = labels.column("building_id"), l_band = labels.column("band");
    int l_c = labels.column("class");
    int l_p[3] = {labels.column("p_low"), labels.column("p_medium"),
                  labels.column("p_high")};
    if (l_b < 0 || l_band < 0 || l_c < 0)
      throw ParseError("labels_" + tag + ".csv: missing columns");

    std::vector<int> y_true, y_pred;
    std::vector<std::vector<double>> dists;
    for (const auto& r : labels.rows) {
      auto it = truth_by_pair.find({r[l_b], std::stoi(r[l_band])});
      if (it == truth_by_pair.end()) continue;
      y_true.push_back(it->second);
      y_pred.push_back(classFromName(r[l_c]));
      if (l_p[0] >= 0 && l_p[1] >= 0 && l_p[2] >= 0) {
        std::vector<double> d = {std::stod(r[l_p[0]]), std::stod(r[l_p[1]]),
                                 std::stod(r[l_p[2]])};
        double s = d[0] + d[1] + d[2];  // undo the CSV rounding
        if (s > 0.0)
          for (double& v : d) v /= s;
        dists.push_back(std::move(d));
      }
    }
    if (y_true.empty())
      throw InsufficientData("eval " + tag + ": no (building, band) pairs matched");

    metrics::EvalReport rep;
    rep.model = cfg.mode + "-" + cfg.model;
    rep.task = tag;
    rep.detail = metrics::classificationReport(y_true, y_pred);
    rep.accuracy = rep.detail.accuracy;
    rep.macro_f1 = rep.detail.macro_f1;
    if (!dists.empty()) {
      rep.mean_entropy_buildings = metrics::buildingEntropy(dists);
      rep.mean_entropy_samples = rep.mean_entropy_buildings;
      rep.mmpp = metrics::mmpp(dists);
    }

    ordered_json edoc;
    edoc["meta"] = cfg.header();
    edoc["report"] = rep.toJson();
    writeJsonFile((fs::path(cfg.paths.out) / ("eval_" + tag + ".json")).string(), edoc);
    {
      std::ofstream os(fs::path(cfg.paths.out) / ("eval_" + tag + ".txt"));
      os << "# " << cfg.header() << "\n" << rep.toText();
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace rfloss::pipeline
