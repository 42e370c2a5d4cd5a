#include "rfloss/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rfloss::forest {

namespace {

struct Split {
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::uint32_t mask = 0;
  double gain = 0.0;
};

void partition(const Matrix& X, const std::vector<int>& idx, const Split& s,
               std::vector<int>& left, std::vector<int>& right) {
  left.clear();
  right.clear();
  for (int i : idx) {
    bool go_left;
    if (s.categorical) {
      int code = static_cast<int>(X[i][s.feature]);
      go_left = (s.mask >> code) & 1u;
    } else {
      go_left = X[i][s.feature] <= s.threshold;
    }
    (go_left ? left : right).push_back(i);
  }
}

std::vector<int> sampleFeatures(std::size_t n_features, std::size_t m, Rng& rng) {
  std::vector<int> all(n_features);
  std::iota(all.begin(), all.end(), 0);
  if (m >= n_features) return all;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n_features - i));
    std::swap(all[i], all[j]);
  }
  all.resize(m);
  return all;
}

// ---------------------------------------------------------------------------
// Gini classification trees (random forest)
// ---------------------------------------------------------------------------

class GiniTreeBuilder {
 public:
  GiniTreeBuilder(const Matrix& X, const std::vector<int>& y,
                  const std::vector<double>& w, const FeatureSchema& schema,
                  int n_classes, int max_depth, int min_leaf, std::size_t n_sub,
                  Rng& rng, std::vector<double>& feature_gain)
      : X_(X), y_(y), w_(w), schema_(schema), n_classes_(n_classes),
        max_depth_(max_depth), min_leaf_(min_leaf), n_sub_(n_sub), rng_(rng),
        feature_gain_(feature_gain) {}

  DecisionTree build(const std::vector<int>& idx) {
    DecisionTree t;
    grow(t, idx, 0);
    return t;
  }

 private:
  static double giniImpurity(const std::vector<double>& hist, double total) {
    if (total <= 0.0) return 0.0;
    double s = 0.0;
    for (double h : hist) s += (h / total) * (h / total);
    return 1.0 - s;
  }

  int makeLeaf(DecisionTree& t, const std::vector<int>& idx) {
    TreeNode node;
    node.values.assign(n_classes_, 0.0);
    double total = 0.0;
    for (int i : idx) {
      node.values[y_[i]] += w_[i];
      total += w_[i];
    }
    for (double& v : node.values) v /= total;
    t.nodes.push_back(std::move(node));
    return static_cast<int>(t.nodes.size()) - 1;
  }

  int grow(DecisionTree& t, const std::vector<int>& idx, int depth) {
    if (depth >= max_depth_ || static_cast<int>(idx.size()) < 2 * min_leaf_)
      return makeLeaf(t, idx);

    Split best = findBestSplit(idx);
    if (best.feature < 0) return makeLeaf(t, idx);

    std::vector<int> left, right;
    partition(X_, idx, best, left, right);
    if (static_cast<int>(left.size()) < min_leaf_ ||
        static_cast<int>(right.size()) < min_leaf_)
      return makeLeaf(t, idx);

    feature_gain_[best.feature] += best.gain;
    int self = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    t.nodes[self].feature = best.feature;
    t.nodes[self].categorical = best.categorical;
    t.nodes[self].threshold = best.threshold;
    t.nodes[self].cat_mask = best.mask;
    int l = grow(t, left, depth + 1);
    int r = grow(t, right, depth + 1);
    t.nodes[self].left = l;
    t.nodes[self].right = r;
    return self;
  }

  Split findBestSplit(const std::vector<int>& idx) {
    std::vector<double> parent_hist(n_classes_, 0.0);
    double total = 0.0;
    for (int i : idx) {
      parent_hist[y_[i]] += w_[i];
      total += w_[i];
    }
    double parent_score = giniImpurity(parent_hist, total) * total;

    Split best;
    for (int f : sampleFeatures(schema_.size(), n_sub_, rng_)) {
      if (schema_.kinds[f] == FeatureKind::categorical)
        scanCategorical(idx, f, parent_hist, total, parent_score, best);
      else
        scanNumeric(idx, f, parent_hist, total, parent_score, best);
    }
    return best;
  }

  void scanNumeric(const std::vector<int>& idx, int f,
                   const std::vector<double>& parent_hist, double total,
                   double parent_score, Split& best) {
    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(idx.size());
    for (int i : idx) sorted.emplace_back(X_[i][f], i);
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> left_hist(n_classes_, 0.0);
    double left_total = 0.0;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      int i = sorted[k].second;
      left_hist[y_[i]] += w_[i];
      left_total += w_[i];
      if (sorted[k].first == sorted[k + 1].first) continue;
      if (static_cast<int>(k + 1) < min_leaf_ ||
          static_cast<int>(sorted.size() - k - 1) < min_leaf_)
        continue;
      double right_total = total - left_total;
      double lg = giniImpurity(left_hist, left_total) * left_total;
      std::vector<double> right_hist(n_classes_);
      for (int c = 0; c < n_classes_; ++c) right_hist[c] = parent_hist[c] - left_hist[c];
      double rg = giniImpurity(right_hist, right_total) * right_total;
      double gain = parent_score - lg - rg;
      if (gain > best.gain + 1e-12) {
        best.feature = f;
        best.categorical = false;
        best.threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
        best.gain = gain;
      }
    }
  }

  void scanCategorical(const std::vector<int>& idx, int f,
                       const std::vector<double>& parent_hist, double total,
                       double parent_score, Split& best) {
    int n_cat = schema_.n_categories[f];
    std::vector<std::vector<double>> hist(n_cat, std::vector<double>(n_classes_, 0.0));
    std::vector<double> cat_w(n_cat, 0.0);
    std::vector<double> cat_score(n_cat, 0.0);  // mean label index, orders subsets
    for (int i : idx) {
      int code = static_cast<int>(X_[i][f]);
      hist[code][y_[i]] += w_[i];
      cat_w[code] += w_[i];
      cat_score[code] += w_[i] * y_[i];
    }
    std::vector<int> order;
    for (int c = 0; c < n_cat; ++c)
      if (cat_w[c] > 0.0) order.push_back(c);
    if (order.size() < 2) return;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return cat_score[a] / cat_w[a] < cat_score[b] / cat_w[b];
    });

    std::vector<double> left_hist(n_classes_, 0.0);
    double left_total = 0.0;
    std::uint32_t mask = 0;
    int left_count = 0, total_count = static_cast<int>(idx.size());
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      int c = order[k];
      for (int cl = 0; cl < n_classes_; ++cl) left_hist[cl] += hist[c][cl];
      left_total += cat_w[c];
      mask |= (1u << c);
      for (int i : idx)
        if (static_cast<int>(X_[i][f]) == c) ++left_count;
      if (left_count < min_leaf_ || total_count - left_count < min_leaf_) continue;
      double right_total = total - left_total;
      double lg = giniImpurity(left_hist, left_total) * left_total;
      std::vector<double> right_hist(n_classes_);
      for (int cl = 0; cl < n_classes_; ++cl)
        right_hist[cl] = parent_hist[cl] - left_hist[cl];
      double rg = giniImpurity(right_hist, right_total) * right_total;
      double gain = parent_score - lg - rg;
      if (gain > best.gain + 1e-12) {
        best.feature = f;
        best.categorical = true;
        best.mask = mask;
        best.gain = gain;
      }
    }
  }

  const Matrix& X_;
  const std::vector<int>& y_;
  const std::vector<double>& w_;
  const FeatureSchema& schema_;
  int n_classes_;
  int max_depth_;
  int min_leaf_;
  std::size_t n_sub_;
  Rng& rng_;
  std::vector<double>& feature_gain_;
};

// ---------------------------------------------------------------------------
// Newton regression trees (gradient boosting)
// ---------------------------------------------------------------------------

class NewtonTreeBuilder {
 public:
  NewtonTreeBuilder(const Matrix& X, const std::vector<double>& grad,
                    const std::vector<double>& hess, const FeatureSchema& schema,
                    double reg_lambda, double learning_rate, int min_leaf,
                    std::vector<double>& feature_gain)
      : X_(X), g_(grad), h_(hess), schema_(schema), lambda_(reg_lambda),
        lr_(learning_rate), min_leaf_(min_leaf), feature_gain_(feature_gain) {}

  DecisionTree buildLevelWise(const std::vector<int>& idx, int max_depth) {
    DecisionTree t;
    growLevel(t, idx, 0, max_depth);
    return t;
  }

  DecisionTree buildLeafWise(const std::vector<int>& idx, int max_leaves) {
    DecisionTree t;
    struct Open {
      int node;
      std::vector<int> idx;
      Split best;
    };
    std::vector<Open> open;
    open.push_back({makeLeaf(t, idx), idx, findBestSplit(idx)});
    int leaves = 1;
    while (leaves < max_leaves) {
      int pick = -1;
      double best_gain = 1e-12;
      for (std::size_t i = 0; i < open.size(); ++i) {
        if (open[i].best.feature >= 0 && open[i].best.gain > best_gain) {
          best_gain = open[i].best.gain;
          pick = static_cast<int>(i);
        }
      }
      if (pick < 0) break;
      Open cur = std::move(open[pick]);
      open.erase(open.begin() + pick);

      std::vector<int> left, right;
      partition(X_, cur.idx, cur.best, left, right);
      if (static_cast<int>(left.size()) < min_leaf_ ||
          static_cast<int>(right.size()) < min_leaf_)
        continue;

      feature_gain_[cur.best.feature] += cur.best.gain;
      TreeNode& n = t.nodes[cur.node];
      n.feature = cur.best.feature;
      n.categorical = cur.best.categorical;
      n.threshold = cur.best.threshold;
      n.cat_mask = cur.best.mask;
      n.values.clear();
      int l = makeLeaf(t, left);
      int r = makeLeaf(t, right);
      t.nodes[cur.node].left = l;
      t.nodes[cur.node].right = r;
      open.push_back({l, std::move(left), {}});
      open.back().best = findBestSplit(open.back().idx);
      open.push_back({r, std::move(right), {}});
      open.back().best = findBestSplit(open.back().idx);
      ++leaves;
    }
    return t;
  }

 private:
  double leafWeight(double G, double H) const { return -G / (H + lambda_); }

  static double scoreOf(double G, double H, double lambda) {
    return G * G / (H + lambda);
  }

  int makeLeaf(DecisionTree& t, const std::vector<int>& idx) {
    double G = 0.0, H = 0.0;
    for (int i : idx) {
      G += g_[i];
      H += h_[i];
    }
    TreeNode node;
    node.values = {lr_ * leafWeight(G, H)};
    t.nodes.push_back(std::move(node));
    return static_cast<int>(t.nodes.size()) - 1;
  }

  int growLevel(DecisionTree& t, const std::vector<int>& idx, int depth, int max_depth) {
    if (depth >= max_depth || static_cast<int>(idx.size()) < 2 * min_leaf_)
      return makeLeaf(t, idx);
    Split best = findBestSplit(idx);
    if (best.feature < 0) return makeLeaf(t, idx);
    std::vector<int> left, right;
    partition(X_, idx, best, left, right);
    if (static_cast<int>(left.size()) < min_leaf_ ||
        static_cast<int>(right.size()) < min_leaf_)
      return makeLeaf(t, idx);
    feature_gain_[best.feature] += best.gain;
    int self = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    t.nodes[self].feature = best.feature;
    t.nodes[self].categorical = best.categorical;
    t.nodes[self].threshold = best.threshold;
    t.nodes[self].cat_mask = best.mask;
    int l = growLevel(t, left, depth + 1, max_depth);
    int r = growLevel(t, right, depth + 1, max_depth);
    t.nodes[self].left = l;
    t.nodes[self].right = r;
    return self;
  }

  Split findBestSplit(const std::vector<int>& idx) {
    if (static_cast<int>(idx.size()) < 2 * min_leaf_) return {};
    double G = 0.0, H = 0.0;
    for (int i : idx) {
      G += g_[i];
      H += h_[i];
    }
    double parent_score = scoreOf(G, H, lambda_);
    Split best;
    for (int f = 0; f < static_cast<int>(schema_.size()); ++f) {
      if (schema_.kinds[f] == FeatureKind::categorical)
        scanCategorical(idx, f, G, H, parent_score, best);
      else
        scanNumeric(idx, f, G, H, parent_score, best);
    }
    return best;
  }

  void scanNumeric(const std::vector<int>& idx, int f, double G, double H,
                   double parent_score, Split& best) {
    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(idx.size());
    for (int i : idx) sorted.emplace_back(X_[i][f], i);
    std::sort(sorted.begin(), sorted.end());
    double GL = 0.0, HL = 0.0;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      int i = sorted[k].second;
      GL += g_[i];
      HL += h_[i];
      if (sorted[k].first == sorted[k + 1].first) continue;
      if (static_cast<int>(k + 1) < min_leaf_ ||
          static_cast<int>(sorted.size() - k - 1) < min_leaf_)
        continue;
      double gain = 0.5 * (scoreOf(GL, HL, lambda_) + scoreOf(G - GL, H - HL, lambda_) -
                           parent_score);
      if (gain > best.gain + 1e-12) {
        best.feature = f;
        best.categorical = false;
        best.threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
        best.gain = gain;
      }
    }
  }

  void scanCategorical(const std::vector<int>& idx, int f, double G, double H,
                       double parent_score, Split& best) {
    int n_cat = schema_.n_categories[f];
    std::vector<double> Gc(n_cat, 0.0), Hc(n_cat, 0.0);
    std::vector<int> count(n_cat, 0);
    for (int i : idx) {
      int code = static_cast<int>(X_[i][f]);
      Gc[code] += g_[i];
      Hc[code] += h_[i];
      ++count[code];
    }
    std::vector<int> order;
    for (int c = 0; c < n_cat; ++c)
      if (count[c] > 0) order.push_back(c);
    if (order.size() < 2) return;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return Gc[a] / (Hc[a] + lambda_) < Gc[b] / (Hc[b] + lambda_);
    });
    double GL = 0.0, HL = 0.0;
    std::uint32_t mask = 0;
    int left_count = 0, total_count = static_cast<int>(idx.size());
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      int c = order[k];
      GL += Gc[c];
      HL += Hc[c];
      left_count += count[c];
      mask |= (1u << c);
      if (left_count < min_leaf_ || total_count - left_count < min_leaf_) continue;
      double gain = 0.5 * (scoreOf(GL, HL, lambda_) + scoreOf(G - GL, H - HL, lambda_) -
                           parent_score);
      if (gain > best.gain + 1e-12) {
        best.feature = f;
        best.categorical = true;
        best.mask = mask;
        best.gain = gain;
      }
    }
  }

  const Matrix& X_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const FeatureSchema& schema_;
  double lambda_;
  double lr_;
  int min_leaf_;
  std::vector<double>& feature_gain_;
};

std::vector<double> classWeights(const std::vector<int>& labels,
                                 const std::vector<double>& weights, int n_classes,
                                 bool enabled) {
  std::vector<double> cw(n_classes, 1.0);
  if (!enabled) return cw;
  std::vector<double> mass(n_classes, 0.0);
  double total = 0.0;
  int present = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    mass[labels[i]] += weights[i];
    total += weights[i];
  }
  for (int c = 0; c < n_classes; ++c)
    if (mass[c] > 0.0) ++present;
  for (int c = 0; c < n_classes; ++c)
    if (mass[c] > 0.0) cw[c] = total / (present * mass[c]);
  return cw;
}

int distinctClassCount(const std::vector<int>& labels, int n_classes, int* the_class) {
  std::vector<bool> seen(n_classes, false);
  for (int y : labels) seen[y] = true;
  int n = 0;
  for (int c = 0; c < n_classes; ++c)
    if (seen[c]) {
      ++n;
      if (the_class) *the_class = c;
    }
  if (n == 1 && the_class)
    for (int c = 0; c < n_classes; ++c)
      if (seen[c]) *the_class = c;
  return n;
}

EnsembleModel constantModel(ModelKind kind, const FeatureSchema& schema, int only_class) {
  EnsembleModel m;
  m.kind = kind;
  m.schema = schema;
  m.single_class = true;
  m.only_class = only_class;
  m.feature_gain.assign(schema.size(), 0.0);
  return m;
}

double weightedLogLoss(const Matrix& X, const std::vector<int>& y,
                       const std::vector<double>& w, const EnsembleModel& model,
                       const std::vector<std::vector<double>>* scores) {
  double loss = 0.0, total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    std::vector<double> p =
        scores ? softmax((*scores)[i]) : model.predictProba(X[i]);
    double q = std::max(p[y[i]], 1e-15);
    loss -= w[i] * std::log(q);
    total += w[i];
  }
  return loss / std::max(total, 1e-300);
}

}  // namespace

// ---------------------------------------------------------------------------

void FeatureSchema::validate() const {
  if (names.size() != kinds.size() || names.size() != n_categories.size())
    throw ConfigError("feature schema field lengths differ");
  for (std::size_t f = 0; f < names.size(); ++f) {
    if (kinds[f] == FeatureKind::categorical) {
      if (n_categories[f] < 1 || n_categories[f] > 32)
        throw ConfigError("categorical feature '" + names[f] +
                          "' needs 1..32 categories");
    }
  }
}

nlohmann::ordered_json FeatureSchema::toJson() const {
  nlohmann::ordered_json j;
  j["names"] = names;
  std::vector<std::string> ks;
  for (auto k : kinds)
    ks.push_back(k == FeatureKind::categorical ? "categorical" : "numeric");
  j["kinds"] = ks;
  j["n_categories"] = n_categories;
  return j;
}

FeatureSchema FeatureSchema::fromJson(const nlohmann::json& j) {
  FeatureSchema s;
  s.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds"))
    s.kinds.push_back(k.get<std::string>() == "categorical" ? FeatureKind::categorical
                                                            : FeatureKind::numeric);
  s.n_categories = j.at("n_categories").get<std::vector<int>>();
  s.validate();
  return s;
}

const std::vector<double>& DecisionTree::leafValues(const Row& row) const {
  int n = 0;
  while (nodes[n].feature >= 0) {
    const TreeNode& nd = nodes[n];
    bool left;
    if (nd.categorical) {
      int code = static_cast<int>(row[nd.feature]);
      left = code >= 0 && code < 32 && ((nd.cat_mask >> code) & 1u);
    } else {
      left = row[nd.feature] <= nd.threshold;
    }
    n = left ? nd.left : nd.right;
  }
  return nodes[n].values;
}

nlohmann::ordered_json DecisionTree::toJson() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& n : nodes) {
    nlohmann::ordered_json jn;
    jn["f"] = n.feature;
    if (n.feature >= 0) {
      jn["cat"] = n.categorical;
      if (n.categorical)
        jn["mask"] = n.cat_mask;
      else
        jn["thr"] = n.threshold;
      jn["l"] = n.left;
      jn["r"] = n.right;
    } else {
      jn["v"] = n.values;
    }
    arr.push_back(std::move(jn));
  }
  return arr;
}

DecisionTree DecisionTree::fromJson(const nlohmann::json& j) {
  DecisionTree t;
  for (const auto& jn : j) {
    TreeNode n;
    n.feature = jn.at("f").get<int>();
    if (n.feature >= 0) {
      n.categorical = jn.at("cat").get<bool>();
      if (n.categorical)
        n.cat_mask = jn.at("mask").get<std::uint32_t>();
      else
        n.threshold = jn.at("thr").get<double>();
      n.left = jn.at("l").get<int>();
      n.right = jn.at("r").get<int>();
    } else {
      n.values = jn.at("v").get<std::vector<double>>();
    }
    t.nodes.push_back(std::move(n));
  }
  return t;
}

std::string modelKindName(ModelKind k) {
  switch (k) {
    case ModelKind::random_forest: return "random-forest";
    case ModelKind::gb_levelwise: return "gb-levelwise";
    case ModelKind::gb_leafwise: return "gb-leafwise";
    case ModelKind::voting: return "voting";
  }
  return "?";
}

ModelKind modelKindFromName(const std::string& s) {
  if (s == "random-forest" || s == "rf") return ModelKind::random_forest;
  if (s == "gb-levelwise" || s == "gb-level") return ModelKind::gb_levelwise;
  if (s == "gb-leafwise" || s == "gb-leaf") return ModelKind::gb_leafwise;
  if (s == "voting") return ModelKind::voting;
  throw ConfigError("unknown model kind: " + s);
}

std::vector<double> softmax(const std::vector<double>& scores) {
  double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> EnsembleModel::predictProba(const Row& row) const {
  if (row.size() != schema.size())
    throw SchemaMismatch("row has " + std::to_string(row.size()) +
                         " features, schema expects " + std::to_string(schema.size()));
  std::vector<double> p(n_classes, 0.0);
  if (single_class) {
    p[only_class] = 1.0;
    return p;
  }
  switch (kind) {
    case ModelKind::random_forest: {
      for (const auto& t : trees) {
        const auto& v = t.leafValues(row);
        for (int c = 0; c < n_classes; ++c) p[c] += v[c];
      }
      for (double& v : p) v /= static_cast<double>(trees.size());
      return p;
    }
    case ModelKind::gb_levelwise:
    case ModelKind::gb_leafwise: {
      std::vector<double> score = base_score;
      for (std::size_t t = 0; t < trees.size(); ++t)
        score[t % n_classes] += trees[t].leafValues(row)[0];
      return softmax(score);
    }
    case ModelKind::voting: {
      for (const auto& m : members) {
        auto q = m.predictProba(row);
        for (int c = 0; c < n_classes; ++c) p[c] += q[c];
      }
      for (double& v : p) v /= static_cast<double>(members.size());
      return p;
    }
  }
  return p;
}

int EnsembleModel::predictClass(const Row& row) const {
  auto p = predictProba(row);
  int best = n_classes - 1;
  for (int c = n_classes - 2; c >= 0; --c)
    if (p[c] > p[best]) best = c;
  return best;
}

nlohmann::ordered_json EnsembleModel::toJson() const {
  nlohmann::ordered_json j;
  j["format"] = "rfloss-ensemble";
  j["version"] = 1;
  j["kind"] = modelKindName(kind);
  j["n_classes"] = n_classes;
  j["schema"] = schema.toJson();
  j["single_class"] = single_class;
  j["only_class"] = only_class;
  j["learning_rate"] = learning_rate;
  j["base_score"] = base_score;
  j["feature_gain"] = feature_gain;
  j["oob_accuracy"] = oob_accuracy;
  j["best_rounds"] = best_rounds;
  nlohmann::ordered_json jt = nlohmann::ordered_json::array();
  for (const auto& t : trees) jt.push_back(t.toJson());
  j["trees"] = std::move(jt);
  nlohmann::ordered_json jm = nlohmann::ordered_json::array();
  for (const auto& m : members) jm.push_back(m.toJson());
  j["members"] = std::move(jm);
  return j;
}

EnsembleModel EnsembleModel::fromJson(const nlohmann::json& j) {
  if (j.value("format", "") != std::string("rfloss-ensemble"))
    throw ParseError("not an ensemble model document");
  EnsembleModel m;
  m.kind = modelKindFromName(j.at("kind").get<std::string>());
  m.n_classes = j.at("n_classes").get<int>();
  m.schema = FeatureSchema::fromJson(j.at("schema"));
  m.single_class = j.at("single_class").get<bool>();
  m.only_class = j.at("only_class").get<int>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.base_score = j.at("base_score").get<std::vector<double>>();
  m.feature_gain = j.at("feature_gain").get<std::vector<double>>();
  m.oob_accuracy = j.at("oob_accuracy").get<double>();
  m.best_rounds = j.at("best_rounds").get<int>();
  for (const auto& jt : j.at("trees")) m.trees.push_back(DecisionTree::fromJson(jt));
  for (const auto& jm : j.at("members")) m.members.push_back(EnsembleModel::fromJson(jm));
  return m;
}

// ---------------------------------------------------------------------------

EnsembleModel trainRandomForest(const Matrix& rows, const std::vector<int>& labels,
                                const std::vector<double>& weights,
                                const FeatureSchema& schema, const RfConfig& cfg) {
  schema.validate();
  if (rows.empty() || rows.size() != labels.size() || rows.size() != weights.size())
    throw LengthMismatch("trainRandomForest: rows/labels/weights sizes differ");

  int only = 0;
  if (distinctClassCount(labels, kNumClasses, &only) < 2)
    return constantModel(ModelKind::random_forest, schema, only);

  const std::size_t n = rows.size();
  auto cw = classWeights(labels, weights, kNumClasses, cfg.class_weights);

  EnsembleModel model;
  model.kind = ModelKind::random_forest;
  model.schema = schema;
  model.feature_gain.assign(schema.size(), 0.0);

  // weighted bootstrap via the cumulative base-weight distribution
  std::vector<double> cum(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += weights[i];
    cum[i] = acc;
  }
  std::size_t n_draws = std::max<std::size_t>(1, static_cast<std::size_t>(acc + 0.5));

  std::size_t n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(std::sqrt((double)schema.size()))));

  std::vector<std::vector<double>> oob_proba(n, std::vector<double>(kNumClasses, 0.0));
  std::vector<int> oob_votes(n, 0);

  Rng rng(deriveSeed(cfg.seed, "rf"));
  std::vector<double> eff_w(n);
  std::vector<int> mult(n);
  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<int> idx;
    if (cfg.bootstrap) {
      std::fill(mult.begin(), mult.end(), 0);
      for (std::size_t d = 0; d < n_draws; ++d) {
        double u = rng.uniform() * acc;
        std::size_t i =
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
        if (i >= n) i = n - 1;
        ++mult[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        if (mult[i] > 0) {
          idx.push_back(static_cast<int>(i));
          eff_w[i] = mult[i] * cw[labels[i]];
        }
    } else {
      idx.resize(n);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < n; ++i) eff_w[i] = weights[i] * cw[labels[i]];
    }

    GiniTreeBuilder builder(rows, labels, eff_w, schema, kNumClasses, cfg.max_depth,
                            cfg.min_samples_leaf, n_sub, rng, model.feature_gain);
    model.trees.push_back(builder.build(idx));

    if (cfg.bootstrap) {
      const DecisionTree& tree = model.trees.back();
      for (std::size_t i = 0; i < n; ++i)
        if (mult[i] == 0) {
          const auto& v = tree.leafValues(rows[i]);
          for (int c = 0; c < kNumClasses; ++c) oob_proba[i][c] += v[c];
          ++oob_votes[i];
        }
    }
  }

  if (cfg.bootstrap) {
    double correct = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (oob_votes[i] == 0) continue;
      int best = kNumClasses - 1;
      for (int c = kNumClasses - 2; c >= 0; --c)
        if (oob_proba[i][c] > oob_proba[i][best]) best = c;
      if (best == labels[i]) correct += weights[i];
      total += weights[i];
    }
    model.oob_accuracy = total > 0.0 ? correct / total : -1.0;
  }
  return model;
}

EnsembleModel trainGradientBoosting(const Matrix& rows, const std::vector<int>& labels,
                                    const std::vector<double>& weights,
                                    const FeatureSchema& schema, GrowthStrategy strategy,
                                    const GbConfig& cfg, const Matrix* val_rows,
                                    const std::vector<int>* val_labels) {
  schema.validate();
  if (rows.empty() || rows.size() != labels.size() || rows.size() != weights.size())
    throw LengthMismatch("trainGradientBoosting: rows/labels/weights sizes differ");

  ModelKind kind = strategy == GrowthStrategy::level_wise ? ModelKind::gb_levelwise
                                                          : ModelKind::gb_leafwise;
  int only = 0;
  if (distinctClassCount(labels, kNumClasses, &only) < 2)
    return constantModel(kind, schema, only);

  // carve an internal validation fold when early stopping is on and the
  // caller gave none
  Matrix train_X;
  std::vector<int> train_y;
  std::vector<double> train_w;
  Matrix internal_val_X;
  std::vector<int> internal_val_y;
  const Matrix* vX = val_rows;
  const std::vector<int>* vy = val_labels;
  const Matrix* tX = &rows;
  const std::vector<int>* ty = &labels;
  const std::vector<double>* tw = &weights;

  if (!vX && cfg.early_stop_patience > 0 && cfg.val_fraction > 0.0 &&
      rows.size() >= 50) {
    std::vector<int> perm(rows.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng split_rng(deriveSeed(cfg.seed, "gb-valsplit"));
    split_rng.shuffle(perm);
    std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * rows.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      int p = perm[i];
      if (i < n_val) {
        internal_val_X.push_back(rows[p]);
        internal_val_y.push_back(labels[p]);
      } else {
        train_X.push_back(rows[p]);
        train_y.push_back(labels[p]);
        train_w.push_back(weights[p]);
      }
    }
    if (distinctClassCount(train_y, kNumClasses, nullptr) >= 2 && !internal_val_X.empty()) {
      tX = &train_X;
      ty = &train_y;
      tw = &train_w;
      vX = &internal_val_X;
      vy = &internal_val_y;
    } else {
      train_X.clear();
    }
  }

  const Matrix& X = *tX;
  const std::vector<int>& y = *ty;
  const std::vector<double>& w = *tw;
  const std::size_t n = X.size();

  auto cw = classWeights(y, w, kNumClasses, cfg.class_weights);

  EnsembleModel model;
  model.kind = kind;
  model.schema = schema;
  model.learning_rate = cfg.learning_rate;
  model.feature_gain.assign(schema.size(), 0.0);

  // base score: log class priors of the training data
  {
    std::vector<double> prior(kNumClasses, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      prior[y[i]] += w[i];
      total += w[i];
    }
    model.base_score.resize(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c)
      model.base_score[c] = std::log(std::max(prior[c] / total, 1e-12));
  }

  std::vector<std::vector<double>> scores(n, model.base_score);
  std::vector<std::vector<double>> val_scores;
  std::vector<double> val_w;
  if (vX) {
    val_scores.assign(vX->size(), model.base_score);
    val_w.assign(vX->size(), 1.0);
  }

  std::vector<int> all_idx(n);
  std::iota(all_idx.begin(), all_idx.end(), 0);
  std::vector<double> grad(n), hess(n);
  std::vector<std::vector<double>> round_gains;

  double best_val = std::numeric_limits<double>::infinity();
  int best_round = 0;
  int since_best = 0;

  for (int round = 0; round < cfg.n_rounds; ++round) {
    std::vector<double> gains_before = model.feature_gain;
    for (int c = 0; c < kNumClasses; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        auto p = softmax(scores[i]);
        double target = y[i] == c ? 1.0 : 0.0;
        double wi = w[i] * cw[y[i]];
        grad[i] = (p[c] - target) * wi;
        hess[i] = std::max(p[c] * (1.0 - p[c]), 1e-16) * wi;
        if (!std::isfinite(grad[i]) || !std::isfinite(hess[i]))
          throw NonFiniteGradient("non-finite gradient at round " +
                                  std::to_string(round) + " class " + std::to_string(c) +
                                  " row " + std::to_string(i));
      }
      NewtonTreeBuilder builder(X, grad, hess, schema, cfg.reg_lambda,
                                cfg.learning_rate, cfg.min_samples_leaf,
                                model.feature_gain);
      DecisionTree tree = strategy == GrowthStrategy::level_wise
                              ? builder.buildLevelWise(all_idx, cfg.max_depth)
                              : builder.buildLeafWise(all_idx, cfg.max_leaves);
      for (std::size_t i = 0; i < n; ++i) scores[i][c] += tree.leafValues(X[i])[0];
      if (vX)
        for (std::size_t i = 0; i < vX->size(); ++i)
          val_scores[i][c] += tree.leafValues((*vX)[i])[0];
      model.trees.push_back(std::move(tree));
    }
    std::vector<double> delta(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f)
      delta[f] = model.feature_gain[f] - gains_before[f];
    round_gains.push_back(std::move(delta));

    if (vX && cfg.early_stop_patience > 0) {
      double vl = weightedLogLoss(*vX, *vy, val_w, model, &val_scores);
      if (vl < best_val - 1e-9) {
        best_val = vl;
        best_round = round + 1;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    } else {
      best_round = round + 1;
    }
  }

  model.best_rounds = best_round > 0 ? best_round : static_cast<int>(round_gains.size());
  model.trees.resize(static_cast<std::size_t>(model.best_rounds) * kNumClasses);
  std::fill(model.feature_gain.begin(), model.feature_gain.end(), 0.0);
  for (int r = 0; r < model.best_rounds; ++r)
    for (std::size_t f = 0; f < schema.size(); ++f)
      model.feature_gain[f] += round_gains[r][f];
  return model;
}

EnsembleModel trainVoting(const Matrix& rows, const std::vector<int>& labels,
                          const std::vector<double>& weights, const FeatureSchema& schema,
                          const RfConfig& rf_cfg, const GbConfig& gb_cfg) {
  EnsembleModel model;
  model.kind = ModelKind::voting;
  model.schema = schema;
  model.feature_gain.assign(schema.size(), 0.0);
  int only = 0;
  if (distinctClassCount(labels, kNumClasses, &only) < 2)
    return constantModel(ModelKind::voting, schema, only);
  model.members.push_back(trainRandomForest(rows, labels, weights, schema, rf_cfg));
  model.members.push_back(trainGradientBoosting(rows, labels, weights, schema,
                                                GrowthStrategy::level_wise, gb_cfg));
  model.members.push_back(trainGradientBoosting(rows, labels, weights, schema,
                                                GrowthStrategy::leaf_wise, gb_cfg));
  return model;
}

std::map<std::string, double> featureImportance(const EnsembleModel& model) {
  std::map<std::string, double> out;
  if (model.kind == ModelKind::voting && !model.members.empty()) {
    for (const auto& m : model.members) {
      auto part = featureImportance(m);
      for (const auto& [k, v] : part) out[k] += v / model.members.size();
    }
    return out;
  }
  double total = 0.0;
  for (double g : model.feature_gain) total += g;
  for (std::size_t f = 0; f < model.schema.size(); ++f)
    out[model.schema.names[f]] = total > 0.0 ? model.feature_gain[f] / total : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

double GbRegressor::predict(const Row& row) const {
  double s = base;
  for (const auto& t : trees) s += t.leafValues(row)[0];
  return s;
}

GbRegressor trainGBRegressor(const Matrix& rows, const std::vector<double>& targets,
                             const FeatureSchema& schema, const GbRegConfig& cfg) {
  schema.validate();
  if (rows.empty() || rows.size() != targets.size())
    throw LengthMismatch("trainGBRegressor: rows/targets sizes differ");

  GbRegressor model;
  model.schema = schema;
  model.learning_rate = cfg.learning_rate;
  model.base = std::accumulate(targets.begin(), targets.end(), 0.0) /
               static_cast<double>(targets.size());

  const std::size_t n = rows.size();
  std::vector<double> pred(n, model.base);
  std::vector<double> grad(n), hess(n, 1.0);
  std::vector<int> all_idx(n);
  std::iota(all_idx.begin(), all_idx.end(), 0);
  std::vector<double> gain_sink(schema.size(), 0.0);

  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = pred[i] - targets[i];
      if (!std::isfinite(grad[i]))
        throw NonFiniteGradient("non-finite regression gradient at round " +
                                std::to_string(round));
    }
    NewtonTreeBuilder builder(rows, grad, hess, schema, cfg.reg_lambda,
                              cfg.learning_rate, cfg.min_samples_leaf, gain_sink);
    DecisionTree tree = builder.buildLeafWise(all_idx, cfg.max_leaves);
    bool useful = tree.nodes.size() > 1;
    for (std::size_t i = 0; i < n; ++i) pred[i] += tree.leafValues(rows[i])[0];
    model.trees.push_back(std::move(tree));
    if (!useful) break;  // no split found, further rounds cannot help
  }
  return model;
}

}  // namespace rfloss::forest
