#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "rfloss/pipeline.hpp"
#include "testutil.hpp"

using namespace rfloss;
using pipeline::PipelineConfig;

namespace {

PipelineConfig smallConfig(const std::filesystem::path& out, std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.paths.out = out.string();
  cfg.seed = seed;
  cfg.synth.n_buildings = 40;
  cfg.synth.samples_per_building_mean = 40;
  cfg.synth.bands = {1300};
  cfg.pair.i2i_d_min = 2.0;
  cfg.pair.i2i_min_gap_ratio = 0.2;
  cfg.rf.n_trees = 60;
  cfg.rf.max_depth = 5;
  cfg.overlap_budget = 512;
  return cfg;
}

int runCli(const std::string& args) {
  int status = std::system((std::string(RFLOSS_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config round-trips, hashes and validates") {
  auto cfg = smallConfig("/tmp/x", 9);
  cfg.mode = "ssl";
  cfg.model = "gb-leaf";
  auto j = cfg.toJson();
  auto back = PipelineConfig::fromJson(j);
  CHECK(back.toJson().dump() == j.dump());
  CHECK(back.hash() == cfg.hash());
  CHECK(cfg.hash().size() == 16);
  CHECK(cfg.header().find("seed=9") != std::string::npos);

  auto bad = cfg;
  bad.task = "indoor";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.model = "xgboost";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.overlap_budget = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.test_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.pair.d_min = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("full pipeline reruns byte-identically") {
  auto out = testutil::tempDir("pipe_det");
  auto cfg = smallConfig(out, 4);

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
  REQUIRE(first.count("model_o2i.json") == 1);
  REQUIRE(first.count("labels_i2i.csv") == 1);
  REQUIRE(first.count("map_o2i.geojson") == 1);
  REQUIRE(first.count("eval_o2i.json") == 1);
  CHECK(first == second);

  // every artifact carries the config hash header
  std::string stamp = "config_hash=" + cfg.hash();
  for (const auto& [name, content] : first)
    CHECK(content.find(stamp) != std::string::npos);

  // class shares sum to 100% give or take rounding
  auto summary = first.at("summary_o2i.csv");
  double total = 0.0;
  std::istringstream ss(summary);
  std::string line;
  while (std::getline(ss, line)) {
    auto pos = line.rfind(',');
    if (pos == std::string::npos || line[0] == '#' || line.find("share") != std::string::npos)
      continue;
    total += std::stod(line.substr(pos + 1));
  }
  CHECK(total == doctest::Approx(100.0).epsilon(0.01));
}

TEST_CASE("eval on a perfect truth replay scores accuracy 1") {
  auto out = testutil::tempDir("pipe_replay");
  auto cfg = smallConfig(out, 6);
  cfg.task = "o2i";
  pipeline::runSynth(cfg);

  // replay the truth table as the label table
  auto truth = testutil::readFile(out / "truth_buildings.csv");
  std::istringstream ss(truth);
  std::ostringstream labels;
  labels << "building_id,band,class,confidence,p_low,p_medium,p_high\n";
  std::string line;
  bool header = true;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    // columns: building_id,band,o2i_class,i2i_class
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    REQUIRE(f.size() >= 3);
    labels << f[0] << "," << f[1] << "," << f[2] << ",1.0";
    for (int c = 0; c < 3; ++c)
      labels << "," << (metrics::className(c) == f[2] ? "1.0" : "0.0");
    labels << "\n";
  }
  testutil::writeFile(out / "labels_o2i.csv", labels.str());

  auto reports = pipeline::runEval(cfg);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].accuracy == doctest::Approx(1.0));
  CHECK(reports[0].mmpp == doctest::Approx(1.0));
}

TEST_CASE("CLI exit codes") {
  auto out = testutil::tempDir("pipe_cli");
  auto cfg_path = out / "cfg.json";
  {
    auto cfg = smallConfig(out / "run", 2);
    std::ofstream os(cfg_path);
    os << cfg.toJson().dump(2);
  }
  CHECK(runCli("synth --config " + cfg_path.string()) == 0);
  CHECK(runCli("label --config " + cfg_path.string()) == 0);

  CHECK(runCli("synth --config /nonexistent.json") == 2);
  CHECK(runCli("train --task indoor --config " + cfg_path.string()) == 2);
  testutil::writeFile(out / "broken.json", "{ not json");
  CHECK(runCli("synth --config " + (out / "broken.json").string()) == 2);

  // data error: label against an empty directory
  {
    auto cfg = smallConfig(out / "empty", 2);
    std::filesystem::create_directories(out / "empty");
    std::ofstream os(out / "cfg_empty.json");
    os << cfg.toJson().dump(2);
  }
  CHECK(runCli("label --config " + (out / "cfg_empty.json").string()) == 3);
  CHECK(runCli("train --config " + (out / "cfg_empty.json").string()) == 3);
}
