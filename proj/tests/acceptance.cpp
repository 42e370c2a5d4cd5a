// Acceptance harness: one printed pass/fail line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "rfloss/pipeline.hpp"
#include "testutil.hpp"

using namespace rfloss;
using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

geoplane::Polygon rect(double x0, double y0, double x1, double y1, bool extra_vertex) {
  if (!extra_vertex)
    return geoplane::Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
  return geoplane::Polygon(
      {{x0, y0}, {0.5 * (x0 + x1), y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

// --------------------------------------------------------------------------

Check criterion1() {
  Check c;
  auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    double x0 = rng.uniform(-80, 80), y0 = rng.uniform(-80, 80);
    double w = rng.uniform(4, 70), h = rng.uniform(4, 70);
    double mx = rng.uniform(x0 - 25, x0 + w + 25);
    double my = rng.uniform(y0 - 25, y0 + h + 25);
    double sigma = rng.uniform(0.5, 15);
    double got = geoplane::gaussianOverlap({{mx, my}, sigma},
                                           rect(x0, y0, x0 + w, y0 + h, i % 2 == 1),
                                           4096);
    double want = oracles::rectOverlap(x0, y0, x0 + w, y0 + h, mx, my, sigma);
    worst = std::max(worst, std::fabs(got - want));
  }
  double dt = seconds(t0);
  c.require(worst <= 0.02, "max |error| " + std::to_string(worst));
  c.require(dt < 5.0, "runtime " + std::to_string(dt) + " s");
  c.detail = c.ok ? "max |error| " + std::to_string(worst) : c.detail;
  return c;
}

Check criterion2() {
  Check c;
  Rng rng(202);
  losslab::PairConfig pc;
  auto verdictIn = [](const std::string& id) {
    losslab::IndoorVerdict v;
    v.sample_id = id;
    v.indoor = true;
    v.building_id = "b";
    v.overlap = 1.0;
    return v;
  };
  auto verdictOut = [](const std::string& id) {
    losslab::IndoorVerdict v;
    v.sample_id = id;
    return v;
  };
  auto mkSample = [](const std::string& id, double x, double rsrp) {
    dataset::MeasurementSample s;
    s.id = id;
    s.position = {x, 0.0};
    s.accuracy = 1.0;
    s.cell_id = "c";
    s.band = 1300;
    s.rsrp = rsrp;
    return s;
  };
  for (int t = 0; t < 1000 && c.ok; ++t) {
    double pa = rng.uniform(-130, -50), pb = rng.uniform(-130, -50);
    double d = rng.uniform(2, 250), offset = rng.uniform(-40, 40);
    std::vector<dataset::MeasurementSample> ss = {mkSample("a", 0, pa),
                                                  mkSample("b", d, pb)};
    auto o1 = losslab::pairAndComputeLoss({verdictIn("a"), verdictOut("b")}, ss,
                                          losslab::LinkType::O2I, pc);
    auto o2 = losslab::pairAndComputeLoss({verdictOut("a"), verdictIn("b")}, ss,
                                          losslab::LinkType::O2I, pc);
    c.require(o1.size() == 1 && o2.size() == 1, "pair not formed");
    if (!c.ok) break;
    c.require(std::fabs(o1[0].loss + o2[0].loss) <= 1e-12, "antisymmetry violated");
    auto shifted = ss;
    shifted[0].rsrp += offset;
    shifted[1].rsrp += offset;
    auto o3 = losslab::pairAndComputeLoss({verdictIn("a"), verdictOut("b")}, shifted,
                                          losslab::LinkType::O2I, pc);
    c.require(o3.size() == 1 && std::fabs(o3[0].loss - o1[0].loss) <= 1e-12,
              "offset invariance violated");
  }
  if (c.ok) c.detail = "1000 pairs within 1e-12";
  return c;
}

Check criterion3() {
  Check c;
  Rng rng(303);
  std::vector<double> values;
  std::vector<double> modes = {1.0, 5.0, 9.0};
  for (int i = 0; i < 450; ++i) values.push_back(modes[i % 3] + 0.4 * rng.normal());

  auto centers = losslab::kmeans1d(values, 3, 10, 7);
  auto dp = oracles::dpKmeans1d(values, 3);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  int agree = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    int got = 0;
    for (int k = 1; k < 3; ++k)
      if (std::fabs(sorted[i] - centers[k]) < std::fabs(sorted[i] - centers[got]))
        got = k;
    if (got == dp.assignments[i]) ++agree;
  }
  double rate = static_cast<double>(agree) / sorted.size();
  c.require(rate >= 0.99, "k-means/DP agreement " + std::to_string(rate));

  // silhouette vs the O(n^2) oracle on n = 500
  std::vector<std::vector<double>> pts;
  std::vector<int> assign;
  for (int i = 0; i < 500; ++i) {
    int k = static_cast<int>(rng.below(3));
    pts.push_back({2.5 * k + rng.normal(), rng.normal()});
    assign.push_back(k);
  }
  double got = metrics::silhouette(pts, assign);
  double want = oracles::naiveSilhouette(pts, assign);
  c.require(std::fabs(got - want) <= 1e-9, "silhouette mismatch");
  if (c.ok) c.detail = "agreement " + std::to_string(rate) + ", silhouette exact";
  return c;
}

Check criterion4() {
  Check c;
  Rng rng(404);
  const double hmax = std::log2(3.0);
  for (int i = 0; i < 100000 && c.ok; ++i) {
    double a = -std::log(rng.uniform() + 1e-300);
    double b = -std::log(rng.uniform() + 1e-300);
    double d = -std::log(rng.uniform() + 1e-300);
    double s = a + b + d;
    std::vector<std::vector<double>> dist = {{a / s, b / s, d / s}};
    double h = metrics::buildingEntropy(dist);
    double m = metrics::mmpp(dist);
    c.require(h >= 0.0 && h <= hmax + 1e-12, "entropy out of bounds");
    c.require(m >= 1.0 / 3.0 - 1e-12 && m <= 1.0, "MMPP out of bounds");
  }
  double third = 1.0 / 3.0;
  c.require(std::fabs(metrics::buildingEntropy({{1, 0, 0}, {third, third, third}}) -
                      0.5 * hmax) <= 1e-9,
            "entropy hand example");
  c.require(std::fabs(metrics::mmpp({{0.5, 0.3, 0.2}, {0.9, 0.05, 0.05}}) - 0.7) <= 1e-9,
            "MMPP hand example");
  if (c.ok) c.detail = "bounds hold on 1e5 draws, hand examples exact";
  return c;
}

Check criterion5() {
  Check c;
  Rng rng(505);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    int label = static_cast<int>(rng.below(3));
    auto p = forest::softmax(s);
    auto fd = oracles::logLossGradFd(s, label);
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, std::fabs((p[k] - (k == label ? 1.0 : 0.0)) - fd[k]));
  }
  c.require(worst <= 1e-5, "max gradient diff " + std::to_string(worst));
  if (c.ok) c.detail = "max diff " + std::to_string(worst);
  return c;
}

pipeline::PipelineConfig e2eConfig(const std::string& out, std::uint64_t seed) {
  pipeline::PipelineConfig cfg;
  cfg.paths.out = out;
  cfg.seed = seed;
  cfg.synth.bands = {1300};  // one carrier concentrates samples per group
  cfg.rf.max_depth = 5;      // shallow trees force pooling across buildings
  return cfg;
}

Check criterion6() {
  Check c;
  auto t0 = Clock::now();
  auto out = testutil::tempDir("accept6");
  auto cfg = e2eConfig(out.string(), 2);
  pipeline::runSynth(cfg);
  pipeline::runLabel(cfg);
  pipeline::runTrain(cfg);
  pipeline::runInfer(cfg);
  auto reports = pipeline::runEval(cfg);
  double dt = seconds(t0);
  double o2i = -1, i2i = -1;
  for (const auto& r : reports) (r.task == "o2i" ? o2i : i2i) = r.accuracy;
  c.require(o2i >= 0.85, "O2I accuracy " + std::to_string(o2i));
  c.require(i2i >= 0.80, "I2I accuracy " + std::to_string(i2i));
  c.require(dt < 120.0, "runtime " + std::to_string(dt) + " s");
  if (c.ok)
    c.detail = "O2I " + std::to_string(o2i) + ", I2I " + std::to_string(i2i) + ", " +
               std::to_string(dt).substr(0, 5) + " s";
  return c;
}

Check criterion7() {
  Check c;
  int acc_wins[2] = {0, 0};
  int entropy_ok[2] = {0, 0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double acc[2][2], ent[2][2];  // [mode][task]
    for (int mode = 0; mode < 2; ++mode) {
      auto out = testutil::tempDir("accept7_" + std::to_string(seed) + "_" +
                                   std::to_string(mode));
      auto cfg = e2eConfig(out.string(), seed);
      cfg.mode = mode == 0 ? "sl" : "ssl";
      cfg.hidden_fraction = 0.5;  // labels withheld for half the buildings
      cfg.ssl_cfg.confidence_threshold = 0.55;
      pipeline::runSynth(cfg);
      pipeline::runLabel(cfg);
      auto results = pipeline::runTrain(cfg);
      for (const auto& r : results) {
        int t = r.task == dataset::Task::O2I ? 0 : 1;
        acc[mode][t] = r.report.accuracy;
        ent[mode][t] = r.report.mean_entropy_buildings;
      }
    }
    for (int t = 0; t < 2; ++t) {
      if (acc[1][t] >= acc[0][t] - 1e-12) ++acc_wins[t];
      if (ent[1][t] <= ent[0][t] + 1e-9) ++entropy_ok[t];
    }
  }
  for (int t = 0; t < 2; ++t) {
    std::string task = t == 0 ? "O2I" : "I2I";
    c.require(acc_wins[t] >= 3, task + " SSL>=SL on " + std::to_string(acc_wins[t]) +
                                    "/5 seeds");
    c.require(entropy_ok[t] >= 3,
              task + " entropy non-increasing on " + std::to_string(entropy_ok[t]) +
                  "/5 seeds");
  }
  if (c.ok)
    c.detail = "SSL>=SL on " + std::to_string(acc_wins[0]) + "/5 (O2I), " +
               std::to_string(acc_wins[1]) + "/5 (I2I) seeds; entropy ok on " +
               std::to_string(entropy_ok[0]) + "+" + std::to_string(entropy_ok[1]) +
               "/10";
  return c;
}

Check criterion8() {
  Check c;
  synthcity::SynthConfig sc;
  sc.deterministic_attributes = true;
  sc.seed = 1;
  auto scenario = synthcity::generateScenario(sc);
  std::vector<dataset::BuildingRecord> recs;
  std::vector<int> truth;
  for (auto& b : scenario.buildings) {
    recs.push_back(b.record);
    truth.push_back(b.o2i_class);
  }
  auto cb = dataset::fitCodeBook(recs, sc.bands);
  auto schema = dataset::featureSchema(dataset::Task::O2I, cb);
  forest::Matrix X;
  std::vector<double> w(recs.size(), 1.0);
  for (const auto& r : recs)
    X.push_back(dataset::featureRow(r, dataset::engineerFeatures(r), sc.bands[0],
                                    dataset::Task::O2I, cb));
  forest::GbConfig gb;
  gb.seed = 42;
  auto model = forest::trainGradientBoosting(X, truth, w, schema,
                                             forest::GrowthStrategy::level_wise, gb);
  auto imp = forest::featureImportance(model);
  double combined = imp["insulation"] + imp["glazing"];
  c.require(combined >= 0.60, "combined importance " + std::to_string(combined));
  if (c.ok) c.detail = "insulation+glazing importance " + std::to_string(combined);
  return c;
}

Check criterion9() {
  Check c;
  auto out = testutil::tempDir("accept9");
  pipeline::PipelineConfig cfg;
  cfg.paths.out = out.string();
  cfg.seed = 11;
  cfg.synth.n_buildings = 40;
  cfg.synth.samples_per_building_mean = 40;
  cfg.synth.bands = {1300};
  cfg.pair.i2i_d_min = 2.0;
  cfg.pair.i2i_min_gap_ratio = 0.2;
  cfg.rf.n_trees = 60;
  cfg.overlap_budget = 512;
  auto runAll = [&] {
    pipeline::runSynth(cfg);
    pipeline::runLabel(cfg);
    pipeline::runTrain(cfg);
    pipeline::runInfer(cfg);
    pipeline::runEval(cfg);
    return testutil::snapshotDir(out);
  };
  auto first = runAll();
  auto second = runAll();
  c.require(first.size() >= 15, "expected a full artifact set");
  c.require(first == second, "outputs differ between reruns");
  if (c.ok) c.detail = std::to_string(first.size()) + " files byte-identical";
  return c;
}

Check criterion10() {
  Check c;
  // single-class training: constant model instead of a crash
  forest::FeatureSchema schema;
  schema.names = {"f0"};
  schema.kinds = {forest::FeatureKind::numeric};
  schema.n_categories = {0};
  auto m = forest::trainRandomForest({{0.0}, {1.0}, {2.0}}, {1, 1, 1}, {1, 1, 1},
                                     schema, {});
  auto p = m.predictProba({0.5});
  c.require(p[1] == 1.0 && p[0] == 0.0, "single-class model not constant");

  // empty unlabeled pool: self-training equals supervised training
  forest::Matrix X;
  std::vector<int> y;
  std::vector<double> w;
  Rng rng(606);
  for (int i = 0; i < 60; ++i) {
    int cls = i % 3;
    X.push_back({3.0 * cls + rng.normal()});
    y.push_back(cls);
    w.push_back(1.0);
  }
  forest::RfConfig rf;
  rf.n_trees = 20;
  ssl::Trainer trainer = [&](const forest::Matrix& rows, const std::vector<int>& labels,
                             const std::vector<double>& weights) {
    return forest::trainRandomForest(rows, labels, weights, schema, rf);
  };
  auto st = ssl::selfTrain(trainer, X, y, w, {}, {}, {});
  c.require(st.ledger.empty() &&
                st.model.toJson().dump() == trainer(X, y, w).toJson().dump(),
            "empty pool changed the model");

  // sigma_b = 0 groups pass the z-filter untouched
  std::vector<std::pair<losslab::LossObservation, int>> grp;
  for (int i = 0; i < 5; ++i) {
    losslab::LossObservation o;
    o.building_id = "b";
    o.band = 1300;
    o.loss = 2.5;
    grp.emplace_back(o, 1);
  }
  c.require(losslab::zscoreFilter(grp).size() == grp.size(), "sigma=0 group filtered");

  // d < d_min pairs are discarded without error
  dataset::MeasurementSample s1, s2;
  s1.id = "a";
  s1.position = {0, 0};
  s1.accuracy = 1;
  s1.cell_id = "c";
  s1.band = 1300;
  s1.rsrp = -80;
  s2 = s1;
  s2.id = "b";
  s2.position = {0.2, 0};
  s2.rsrp = -90;
  losslab::IndoorVerdict v1, v2;
  v1.sample_id = "a";
  v1.indoor = true;
  v1.building_id = "b0";
  v2.sample_id = "b";
  c.require(losslab::pairAndComputeLoss({v1, v2}, {s1, s2}, losslab::LinkType::O2I, {})
                .empty(),
            "short pair not discarded");
  if (c.ok) c.detail = "degenerate contracts hold";
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> fn;
  };
  std::vector<Entry> entries = {
      {"1 geometry oracle", criterion1},
      {"2 Eq.(1) properties", criterion2},
      {"3 quantizer recovery", criterion3},
      {"4 metric bounds", criterion4},
      {"5 gradient check", criterion5},
      {"6 end-to-end recovery", criterion6},
      {"7 SSL direction", criterion7},
      {"8 feature importance", criterion8},
      {"9 determinism", criterion9},
      {"10 degenerate inputs", criterion10},
  };
  int failures = 0;
  for (const auto& e : entries) {
    Check c;
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.ok = false;
      c.detail = std::string("exception: ") + ex.what();
    }
    std::printf("criterion %s: %s%s%s\n", e.name, c.ok ? "PASS" : "FAIL",
                c.detail.empty() ? "" : " — ", c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
