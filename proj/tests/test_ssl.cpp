#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rfloss/common.hpp"
#include "rfloss/forest.hpp"
#include "rfloss/ssl.hpp"

using namespace rfloss;

namespace {

forest::FeatureSchema numericSchema(int n) {
  forest::FeatureSchema s;
  for (int i = 0; i < n; ++i) {
    s.names.push_back("f" + std::to_string(i));
    s.kinds.push_back(forest::FeatureKind::numeric);
    s.n_categories.push_back(0);
  }
  return s;
}

dataset::BuildingRecord record(const std::string& glazing) {
  dataset::BuildingRecord r{
      "b", geoplane::Polygon({{0, 0}, {10, 0}, {10, 10}, {0, 10}})};
  r.glazing = glazing;
  return r;
}

ssl::Trainer rfTrainer(const forest::FeatureSchema& schema, int n_trees = 30) {
  forest::RfConfig cfg;
  cfg.n_trees = n_trees;
  cfg.seed = 11;
  return [schema, cfg](const forest::Matrix& X, const std::vector<int>& y,
                       const std::vector<double>& w) {
    return forest::trainRandomForest(X, y, w, schema, cfg);
  };
}

struct Blobs {
  forest::Matrix X;
  std::vector<int> y;
  std::vector<double> w;
};

Blobs makeBlobs(int n, std::uint64_t seed) {
  static const double centers[3][2] = {{0, 0}, {8, 0}, {4, 8}};
  Blobs b;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    int c = i % 3;
    b.X.push_back({centers[c][0] + rng.normal(), centers[c][1] + rng.normal()});
    b.y.push_back(c);
    b.w.push_back(1.0);
  }
  return b;
}

}  // namespace

TEST_CASE("config validation") {
  ssl::SslConfig ok;
  ok.validate();
  ssl::SslConfig bad_tau = ok;
  bad_tau.confidence_threshold = 0.2;
  CHECK_THROWS_AS(bad_tau.validate(), ConfigError);
  ssl::SslConfig bad_w = ok;
  bad_w.rule_weight = 0.6;
  CHECK_THROWS_AS(bad_w.validate(), ConfigError);
}

TEST_CASE("rule blending") {
  auto rules = ssl::defaultRules();
  std::vector<double> uniform = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  SUBCASE("non-matching record is unchanged") {
    auto out = ssl::applyRules(record("single"), uniform, rules, 0.15);
    for (int c = 0; c < 3; ++c) CHECK(out[c] == doctest::Approx(uniform[c]).epsilon(1e-12));
  }

  SUBCASE("zero weight is a no-op") {
    auto out = ssl::applyRules(record("low-e"), uniform, rules, 0.0);
    for (int c = 0; c < 3; ++c) CHECK(out[c] == doctest::Approx(uniform[c]).epsilon(1e-12));
  }

  SUBCASE("modern glazing pulls toward the high class") {
    auto out = ssl::applyRules(record("low-e"), uniform, rules, 0.15);
    CHECK(out[0] == doctest::Approx(0.2833).epsilon(1e-3));
    CHECK(out[1] == doctest::Approx(0.2833).epsilon(1e-3));
    CHECK(out[2] == doctest::Approx(0.4333).epsilon(1e-3));
    double sum = out[0] + out[1] + out[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("self-training contracts") {
  auto schema = numericSchema(2);
  auto blobs = makeBlobs(90, 41);
  auto trainer = rfTrainer(schema);

  SUBCASE("empty unlabeled pool reproduces supervised training") {
    auto st = ssl::selfTrain(trainer, blobs.X, blobs.y, blobs.w, {}, {}, {});
    auto sl = trainer(blobs.X, blobs.y, blobs.w);
    CHECK(st.ledger.empty());
    CHECK(st.model.toJson().dump() == sl.toJson().dump());
  }

  SUBCASE("threshold 1.0 only admits unanimous predictions") {
    std::vector<ssl::UnlabeledRow> pool;
    Rng rng(43);
    for (int i = 0; i < 30; ++i)
      pool.push_back({"u" + std::to_string(i),
                      {rng.uniform(-2, 10), rng.uniform(-2, 10)},
                      nullptr});
    ssl::SslConfig cfg;
    cfg.confidence_threshold = 1.0;
    auto st = ssl::selfTrain(trainer, blobs.X, blobs.y, blobs.w, pool, {}, cfg);
    for (const auto& e : st.ledger) CHECK(e.confidence == doctest::Approx(1.0));
  }

  SUBCASE("accepted pseudo-labels clear the threshold") {
    std::vector<ssl::UnlabeledRow> pool;
    auto extra = makeBlobs(60, 47);
    for (std::size_t i = 0; i < extra.X.size(); ++i)
      pool.push_back({"u" + std::to_string(i), extra.X[i], nullptr});
    ssl::SslConfig cfg;
    cfg.confidence_threshold = 0.7;
    auto st = ssl::selfTrain(trainer, blobs.X, blobs.y, blobs.w, pool, {}, cfg);
    CHECK(!st.ledger.empty());
    CHECK(st.ledger.size() <= pool.size());
    for (const auto& e : st.ledger) {
      CHECK(e.confidence >= cfg.confidence_threshold);
      CHECK(e.iteration >= 1);
    }
    // pseudo-labels on clean blobs should be correct
    int wrong = 0;
    for (const auto& e : st.ledger) {
      std::size_t idx = std::stoul(e.row_id.substr(1));
      if (e.label != extra.y[idx]) ++wrong;
    }
    CHECK(wrong <= static_cast<int>(st.ledger.size()) / 10);

    // determinism of the whole loop
    auto st2 = ssl::selfTrain(trainer, blobs.X, blobs.y, blobs.w, pool, {}, cfg);
    CHECK(st2.ledger.size() == st.ledger.size());
    CHECK(st2.model.toJson().dump() == st.model.toJson().dump());
  }

  SUBCASE("empty labeled set is rejected") {
    CHECK_THROWS_AS(ssl::selfTrain(trainer, {}, {}, {}, {}, {}, {}), EmptyLabeledSet);
  }
}
