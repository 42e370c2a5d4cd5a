#include "rfloss/losslab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "rfloss/metrics.hpp"

namespace rfloss::losslab {

namespace {

double dist2d(const geoplane::Point& a, const geoplane::Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

double TransformParams::apply(double y) const {
  double yp = y + shift;
  if (yp <= 0.0) yp = 1e-12;  // outside the fit range; clamp into the domain
  if (std::fabs(lambda) < 1e-9) return std::log(yp);
  return (std::pow(yp, lambda) - 1.0) / lambda;
}

double TransformParams::invert(double t) const {
  if (std::fabs(lambda) < 1e-9) return std::exp(t) - shift;
  return std::pow(lambda * t + 1.0, 1.0 / lambda) - shift;
}

int LossQuantizer::label(double loss) const {
  double t = transform.apply(loss);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    double d = std::fabs(t - centers[c]);
    if (d < best_d + 1e-15) {  // exact ties go to the higher class
      best_d = std::min(best_d, d);
      best = static_cast<int>(c);
    }
  }
  return best;
}

nlohmann::ordered_json LossQuantizer::toJson() const {
  nlohmann::ordered_json j;
  j["format"] = "rfloss-quantizer";
  j["version"] = 1;
  j["lambda"] = transform.lambda;
  j["shift"] = transform.shift;
  j["centers"] = centers;
  j["class_order"] = {"low", "medium", "high"};
  nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
  for (const auto& [k, s] : silhouette_sweep) sweep.push_back({{"k", k}, {"score", s}});
  j["silhouette_sweep"] = std::move(sweep);
  return j;
}

LossQuantizer LossQuantizer::fromJson(const nlohmann::json& j) {
  if (j.value("format", "") != std::string("rfloss-quantizer"))
    throw ParseError("not a quantizer document");
  LossQuantizer q;
  q.transform.lambda = j.at("lambda").get<double>();
  q.transform.shift = j.at("shift").get<double>();
  q.centers = j.at("centers").get<std::vector<double>>();
  for (const auto& s : j.at("silhouette_sweep"))
    q.silhouette_sweep.emplace_back(s.at("k").get<int>(), s.at("score").get<double>());
  return q;
}

// ---------------------------------------------------------------------------

IndoorVerdict detectIndoor(const dataset::MeasurementSample& sample,
                           const std::vector<dataset::BuildingRecord>& buildings,
                           int budget) {
  IndoorVerdict v;
  v.sample_id = sample.id;

  const dataset::BuildingRecord* best = nullptr;
  double best_overlap = -1.0;
  for (const auto& b : buildings) {
    if (!b.polygon.bbox().inflated(3.0 * sample.accuracy).contains(sample.position))
      continue;
    double ov = geoplane::gaussianOverlap({sample.position, sample.accuracy}, b.polygon,
                                          budget, deriveSeed(fnv1a(sample.id), "io"));
    if (ov > best_overlap || (ov == best_overlap && best && b.id < best->id)) {
      best_overlap = ov;
      best = &b;
    }
  }
  if (!best) return v;

  v.overlap = best_overlap;
  if (best_overlap > 0.50) {
    v.indoor = true;
    v.building_id = best->id;
    v.rule = IndoorRule::p50;
  } else if (best_overlap > 0.30 && geoplane::containsPoint(best->polygon, sample.position)) {
    v.indoor = true;
    v.building_id = best->id;
    v.rule = IndoorRule::centroid30;
  }
  if (v.indoor && geoplane::containsPoint(best->polygon, sample.position))
    v.est_depth = geoplane::boundaryDistance(best->polygon, sample.position);
  return v;
}

std::vector<LossObservation> pairAndComputeLoss(
    const std::vector<IndoorVerdict>& verdicts,
    const std::vector<dataset::MeasurementSample>& samples, LinkType link,
    const PairConfig& cfg) {
  if (verdicts.size() != samples.size())
    throw LengthMismatch("pairAndComputeLoss: verdicts must cover all samples");

  std::vector<LossObservation> out;

  if (link == LinkType::O2I) {
    // outdoor pool per (cell, band)
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> outdoor;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (!verdicts[i].indoor && verdicts[i].overlap <= cfg.outdoor_max_overlap &&
          samples[i].accuracy <= cfg.max_position_sigma)
        outdoor[{samples[i].cell_id, samples[i].band}].push_back(i);

    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!verdicts[i].indoor || verdicts[i].est_depth > cfg.o2i_max_depth ||
          samples[i].accuracy > cfg.max_position_sigma)
        continue;
      auto it = outdoor.find({samples[i].cell_id, samples[i].band});
      if (it == outdoor.end()) continue;
      std::vector<std::pair<double, std::size_t>> candidates;
      for (std::size_t j : it->second) {
        double d = dist2d(samples[i].position, samples[j].position);
        if (d >= cfg.d_min && d <= cfg.d_max) candidates.emplace_back(d, j);
      }
      // closest to the target separation first
      std::sort(candidates.begin(), candidates.end(),
                [&](const auto& a, const auto& b) {
                  double da = std::fabs(a.first - cfg.target_distance);
                  double db = std::fabs(b.first - cfg.target_distance);
                  if (da != db) return da < db;
                  return samples[a.second].id < samples[b.second].id;
                });
      std::size_t take =
          std::min<std::size_t>(candidates.size(), cfg.max_pairs_per_indoor);
      for (std::size_t k = 0; k < take; ++k) {
        auto [d, j] = candidates[k];
        LossObservation obs;
        obs.link = LinkType::O2I;
        obs.sample1 = samples[j].id;
        obs.sample2 = samples[i].id;
        obs.cell_id = samples[i].cell_id;
        obs.band = samples[i].band;
        obs.distance = d;
        obs.loss = (samples[j].rsrp - samples[i].rsrp) / d;
        obs.building_id = verdicts[i].building_id;
        out.push_back(std::move(obs));
      }
    }
    return out;
  }

  // I2I: indoor-indoor within the same building and (cell, band)
  std::map<std::tuple<std::string, std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (verdicts[i].indoor && samples[i].accuracy <= cfg.max_position_sigma)
      groups[{verdicts[i].building_id, samples[i].cell_id, samples[i].band}].push_back(i);

  for (const auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    struct Cand {
      double ratio;
      double d;
      std::size_t a, b;
    };
    std::vector<Cand> cands;
    for (std::size_t u = 0; u < members.size(); ++u)
      for (std::size_t v = u + 1; v < members.size(); ++v) {
        double d = dist2d(samples[members[u]].position, samples[members[v]].position);
        if (d < std::max(cfg.d_min, cfg.i2i_d_min) || d > cfg.d_max) continue;
        double gap =
            std::fabs(verdicts[members[u]].est_depth - verdicts[members[v]].est_depth);
        if (gap < cfg.i2i_min_gap_ratio * d) continue;
        cands.push_back({gap / d, d, members[u], members[v]});
      }
    // longest qualifying pairs first: the shadowing term scales as 1/d
    std::sort(cands.begin(), cands.end(), [&](const Cand& x, const Cand& y) {
      if (x.d != y.d) return x.d > y.d;
      if (samples[x.a].id != samples[y.a].id) return samples[x.a].id < samples[y.a].id;
      return samples[x.b].id < samples[y.b].id;
    });
    std::map<std::size_t, int> used;
    for (const auto& c : cands) {
      if (used[c.a] >= cfg.max_pairs_per_indoor || used[c.b] >= cfg.max_pairs_per_indoor)
        continue;
      ++used[c.a];
      ++used[c.b];
      // stronger sample first; positive loss = more attenuation at the other
      std::size_t s = c.a, w = c.b;
      if (samples[w].rsrp > samples[s].rsrp ||
          (samples[w].rsrp == samples[s].rsrp && samples[w].id < samples[s].id))
        std::swap(s, w);
      LossObservation obs;
      obs.link = LinkType::I2I;
      obs.sample1 = samples[s].id;
      obs.sample2 = samples[w].id;
      obs.cell_id = std::get<1>(key);
      obs.band = std::get<2>(key);
      obs.distance = c.d;
      obs.loss = (samples[s].rsrp - samples[w].rsrp) / c.d;
      obs.building_id = std::get<0>(key);
      out.push_back(std::move(obs));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TransformParams fitBoxCox(const std::vector<double>& values) {
  TransformParams p;
  double lo = *std::min_element(values.begin(), values.end());
  p.shift = 1.0 - lo;
  const double n = static_cast<double>(values.size());

  double log_sum = 0.0;
  for (double y : values) log_sum += std::log(y + p.shift);

  double best_ll = -std::numeric_limits<double>::infinity();
  double best_lambda = 1.0;
  for (int step = -200; step <= 200; ++step) {
    double lambda = step * 0.01;
    double mean = 0.0;
    std::vector<double> z(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      double yp = values[i] + p.shift;
      z[i] = std::fabs(lambda) < 1e-9 ? std::log(yp) : (std::pow(yp, lambda) - 1.0) / lambda;
      mean += z[i];
    }
    mean /= n;
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 0.0) continue;
    double ll = -0.5 * n * std::log(var) + (lambda - 1.0) * log_sum;
    if (ll > best_ll) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  p.lambda = best_lambda;
  return p;
}

std::vector<double> kmeans1d(const std::vector<double>& values, int k, int restarts,
                             std::uint64_t seed) {
  const std::size_t n = values.size();
  if (static_cast<int>(n) < k) throw InsufficientData("kmeans1d: fewer points than clusters");

  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<double> best_centers;

  Rng rng(deriveSeed(seed, "kmeans"));
  for (int attempt = 0; attempt < std::max(1, restarts); ++attempt) {
    // k-means++ seeding
    std::vector<double> centers;
    centers.push_back(values[rng.below(n)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        for (double c : centers) best_d = std::min(best_d, (values[i] - c) * (values[i] - c));
        d2[i] = best_d;
        total += best_d;
      }
      if (total <= 0.0) {
        centers.push_back(values[rng.below(n)]);
        continue;
      }
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= u) {
          pick = i;
          break;
        }
      }
      centers.push_back(values[pick]);
    }

    // Lloyd iterations
    std::vector<int> assign(n, -1);
    bool degenerate = false;
    for (int iter = 0; iter < 200; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int best_c = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          double d = std::fabs(values[i] - centers[c]);
          if (d < best_d) {
            best_d = d;
            best_c = c;
          }
        }
        if (assign[i] != best_c) {
          assign[i] = best_c;
          changed = true;
        }
      }
      std::vector<double> sum(k, 0.0);
      std::vector<int> count(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum[assign[i]] += values[i];
        ++count[assign[i]];
      }
      degenerate = false;
      for (int c = 0; c < k; ++c) {
        if (count[c] == 0) {
          degenerate = true;
          break;
        }
        centers[c] = sum[c] / count[c];
      }
      if (degenerate || !changed) break;
    }
    if (degenerate) continue;

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += (values[i] - centers[assign[i]]) * (values[i] - centers[assign[i]]);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centers = centers;
    }
  }
  if (best_centers.empty())
    throw DegenerateCluster("kmeans1d: all restarts produced an empty cluster");
  std::sort(best_centers.begin(), best_centers.end());
  return best_centers;
}

LossQuantizer fitQuantizer(const std::vector<double>& losses, const QuantizerConfig& cfg) {
  if (losses.size() < 50)
    throw InsufficientData("fitQuantizer needs >= 50 loss values, got " +
                           std::to_string(losses.size()));
  for (double l : losses)
    if (!std::isfinite(l)) throw InsufficientData("fitQuantizer: non-finite loss value");

  LossQuantizer q;
  q.transform = fitBoxCox(losses);

  std::vector<double> z(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) z[i] = q.transform.apply(losses[i]);

  // silhouette sweep over the k range, on a capped subsample
  std::vector<double> sweep_points = z;
  if (static_cast<int>(sweep_points.size()) > cfg.silhouette_subsample) {
    Rng rng(deriveSeed(cfg.seed, "sweep"));
    rng.shuffle(sweep_points);
    sweep_points.resize(cfg.silhouette_subsample);
  }
  std::vector<std::vector<double>> sweep_pts;
  sweep_pts.reserve(sweep_points.size());
  for (double v : sweep_points) sweep_pts.push_back({v});

  for (int k = cfg.k_sweep_lo; k <= cfg.k_sweep_hi; ++k) {
    if (static_cast<std::size_t>(k) > sweep_points.size()) break;
    try {
      auto centers = kmeans1d(sweep_points, k, cfg.restarts, cfg.seed + k);
      std::vector<int> assign(sweep_points.size());
      for (std::size_t i = 0; i < sweep_points.size(); ++i) {
        int best_c = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
          double d = std::fabs(sweep_points[i] - centers[c]);
          if (d < best_d) {
            best_d = d;
            best_c = static_cast<int>(c);
          }
        }
        assign[i] = best_c;
      }
      q.silhouette_sweep.emplace_back(k, metrics::silhouette(sweep_pts, assign));
    } catch (const DegenerateCluster&) {
      // too few distinct values for this k; skip the sweep entry
    }
  }

  q.centers = kmeans1d(z, cfg.k, cfg.restarts, cfg.seed);
  return q;
}

std::vector<std::pair<LossObservation, int>> labelLosses(
    const LossQuantizer& quantizer, const std::vector<LossObservation>& observations) {
  if (quantizer.centers.empty()) throw ConfigError("labelLosses: quantizer not fitted");
  std::vector<std::pair<LossObservation, int>> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) out.emplace_back(obs, quantizer.label(obs.loss));
  return out;
}

std::vector<std::pair<LossObservation, int>> zscoreFilter(
    const std::vector<std::pair<LossObservation, int>>& labeled) {
  std::map<std::tuple<std::string, int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto& obs = labeled[i].first;
    groups[{obs.building_id, obs.band, static_cast<int>(obs.link)}].push_back(i);
  }
  std::vector<bool> keep(labeled.size(), true);
  for (const auto& [key, idx] : groups) {
    if (idx.size() < 3) continue;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i : idx) {
      sum += labeled[i].first.loss;
      sumsq += labeled[i].first.loss * labeled[i].first.loss;
    }
    const double n = static_cast<double>(idx.size());
    double group_var = sumsq / n - (sum / n) * (sum / n);
    if (group_var <= 0.0) continue;  // zero-spread groups pass through
    // leave-one-out z: an extreme outlier must not mask itself by inflating
    // the group std it is scored against
    for (std::size_t i : idx) {
      double x = labeled[i].first.loss;
      double mean = (sum - x) / (n - 1.0);
      double var = (sumsq - x * x) / (n - 1.0) - mean * mean;
      double sd = std::sqrt(std::max(var, 0.0));
      double dev = std::fabs(x - mean);
      if (dev > 3.0 * sd) keep[i] = false;
    }
  }
  std::vector<std::pair<LossObservation, int>> out;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (keep[i]) out.push_back(labeled[i]);
  return out;
}

}  // namespace rfloss::losslab
