#include "crs/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "crs/error.hpp"

namespace crs {

double gini(std::span<const int> labels) {
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "gini of an empty label set");
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  return gini_weighted(static_cast<double>(labels.size()) - static_cast<double>(ones),
                       static_cast<double>(ones));
}

double gini_weighted(double w0, double w1) {
  const double w = w0 + w1;
  if (w <= 0.0) return 0.0;
  // 1 - p0^2 - p1^2 written symmetrically in the two classes.
  return 2.0 * (w0 * w1) / (w * w);
}

double boost_gain(double GL, double HL, double GR, double HR, double lambda, double gamma) {
  const double G = GL + GR, H = HL + HR;
  return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda)) - gamma;
}

double split_midpoint(double a, double b) {
  const double t = 0.5 * (a + b);
  return t < b ? t : a;
}

namespace {

std::vector<Index> sorted_features(std::span<const Index> features) {
  std::vector<Index> out(features.begin(), features.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Sweeps every candidate threshold; `add` folds row r into the left-side
/// statistics and `score` turns (left, total) into a gain.
template <typename Stats, typename Add, typename Score>
std::optional<SplitResult> scan_splits(const Eigen::MatrixXd& X, std::span<const Index> rows,
                                       std::span<const Index> features, int minLeaf,
                                       const Stats& total, Add add, Score score,
                                       double minGain) {
  const auto n = static_cast<Index>(rows.size());
  const Index leaf = std::max(1, minLeaf);
  if (n < 2 * leaf) return std::nullopt;
  std::optional<SplitResult> best;
  double bestGain = minGain;
  std::vector<Index> order(rows.begin(), rows.end());
  for (Index f : sorted_features(features)) {
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return X(a, f) < X(b, f); });
    Stats left{};
    for (Index k = 0; k + 1 < n; ++k) {
      add(left, order[static_cast<std::size_t>(k)]);
      if (k + 1 < leaf) continue;
      if (n - (k + 1) < leaf) break;
      const double a = X(order[static_cast<std::size_t>(k)], f);
      const double b = X(order[static_cast<std::size_t>(k + 1)], f);
      if (!(a < b)) continue;
      const double gain = score(left, total);
      if (gain > bestGain) {
        bestGain = gain;
        best = SplitResult{f, split_midpoint(a, b), gain};
      }
    }
  }
  return best;
}

struct ClassStats {
  double w0 = 0.0;
  double w1 = 0.0;
};

struct GradStats {
  double G = 0.0;
  double H = 0.0;
};

// Gini decrease below this is rounding noise, not a real split.
constexpr double kMinGiniGain = 1e-12;

ClassStats class_totals(const Eigen::VectorXi& y, const Eigen::VectorXd& weights,
                        std::span<const Index> rows) {
  ClassStats s;
  for (Index r : rows) {
    const double w = weights.size() ? weights(r) : 1.0;
    (y(r) == 1 ? s.w1 : s.w0) += w;
  }
  return s;
}

}  // namespace

std::optional<SplitResult> best_split_gini(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                                           const Eigen::VectorXd& weights,
                                           std::span<const Index> rows,
                                           std::span<const Index> features, int minLeaf) {
  const ClassStats total = class_totals(y, weights, rows);
  const double W = total.w0 + total.w1;
  if (W <= 0.0) return std::nullopt;
  const double parent = gini_weighted(total.w0, total.w1);
  auto add = [&](ClassStats& s, Index r) {
    const double w = weights.size() ? weights(r) : 1.0;
    (y(r) == 1 ? s.w1 : s.w0) += w;
  };
  auto score = [&](const ClassStats& l, const ClassStats& t) {
    const double r0 = t.w0 - l.w0, r1 = t.w1 - l.w1;
    const double wl = l.w0 + l.w1, wr = r0 + r1;
    return parent - (wl / W) * gini_weighted(l.w0, l.w1) - (wr / W) * gini_weighted(r0, r1);
  };
  return scan_splits(X, rows, features, minLeaf, total, add, score, kMinGiniGain);
}

std::optional<SplitResult> best_split_boost(const Eigen::MatrixXd& X, const Eigen::VectorXd& g,
                                            const Eigen::VectorXd& h, std::span<const Index> rows,
                                            std::span<const Index> features, int minLeaf,
                                            double lambda, double gamma) {
  GradStats total;
  for (Index r : rows) {
    total.G += g(r);
    total.H += h(r);
  }
  auto add = [&](GradStats& s, Index r) {
    s.G += g(r);
    s.H += h(r);
  };
  auto score = [&](const GradStats& l, const GradStats& t) {
    return boost_gain(l.G, l.H, t.G - l.G, t.H - l.H, lambda, gamma);
  };
  return scan_splits(X, rows, features, minLeaf, total, add, score, 0.0);
}

// ---------------------------------------------------------------------------

const TreeNode& DecisionTree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "empty tree");
  if (row.size() != inputCols) {
    throw Error(ErrorCode::DimensionMismatch, "row width does not match tree");
  }
  const TreeNode* node = &nodes[0];
  while (node->feature >= 0) {
    node = &nodes[static_cast<std::size_t>(row(node->feature) <= node->threshold ? node->left
                                                                                  : node->right)];
  }
  return *node;
}

double DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  return leaf_for(row).value;
}

int DecisionTree::depth() const {
  std::function<int(int)> walk = [&](int i) -> int {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return 0;
    return 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes.empty() ? 0 : walk(0);
}

int DecisionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                         [](const TreeNode& n) { return n.feature < 0; }));
}

Json DecisionTree::to_json() const {
  Json arr = Json::array();
  for (const auto& n : nodes) {
    if (n.feature < 0) {
      arr.push_back(Json{{"value", n.value}, {"rows", n.rows}});
    } else {
      arr.push_back(Json{{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"value", n.value},
                         {"rows", n.rows}});
    }
  }
  return Json{{"maxDepth", maxDepth}, {"minLeaf", minLeaf}, {"inputCols", inputCols}, {"nodes", arr}};
}

DecisionTree DecisionTree::from_json(const Json& j) {
  DecisionTree t;
  t.maxDepth = j.at("maxDepth").get<int>();
  t.minLeaf = j.at("minLeaf").get<int>();
  t.inputCols = j.at("inputCols").get<Index>();
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.value = n.at("value").get<double>();
    node.rows = n.at("rows").get<int>();
    if (n.contains("feature")) {
      node.feature = n.at("feature").get<int>();
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
    }
    t.nodes.push_back(node);
  }
  return t;
}

namespace {

using SplitFn = std::function<std::optional<SplitResult>(std::span<const Index>, int depth)>;
using LeafFn = std::function<double(std::span<const Index>)>;

int grow(DecisionTree& tree, const Eigen::MatrixXd& X, std::vector<Index> rows, int depth,
         const SplitFn& split, const LeafFn& leafValue) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  tree.nodes.back().value = leafValue(rows);
  tree.nodes.back().rows = static_cast<int>(rows.size());
  if (tree.maxDepth >= 0 && depth >= tree.maxDepth) return id;
  const auto best = split(rows, depth);
  if (!best) return id;

  std::vector<Index> left, right;
  for (Index r : rows) (X(r, best->feature) <= best->threshold ? left : right).push_back(r);
  rows.clear();
  rows.shrink_to_fit();
  const int l = grow(tree, X, std::move(left), depth + 1, split, leafValue);
  const int r = grow(tree, X, std::move(right), depth + 1, split, leafValue);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = static_cast<int>(best->feature);
  node.threshold = best->threshold;
  node.left = l;
  node.right = r;
  return id;
}

std::vector<Index> draw_features(Index d, int m, std::mt19937_64& rng) {
  std::vector<Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), Index{0});
  if (m <= 0 || m >= d) return all;
  for (int k = 0; k < m; ++k) {
    std::uniform_int_distribution<Index> pick(k, d - 1);
    std::swap(all[static_cast<std::size_t>(k)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(m));
  return all;
}

}  // namespace

DecisionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                      const Eigen::VectorXd& weights, std::span<const Index> rows,
                      const TreeSettings& settings, std::mt19937_64& rng) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (weights.size() != 0 && weights.size() != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "weights and labels differ");
  }
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "tree needs at least one row");
  DecisionTree tree;
  tree.maxDepth = settings.maxDepth;
  tree.minLeaf = std::max(1, settings.minLeaf);
  tree.inputCols = X.cols();

  LeafFn leaf = [&](std::span<const Index> r) {
    const ClassStats s = class_totals(y, weights, r);
    const double w = s.w0 + s.w1;
    return w > 0.0 ? s.w1 / w : 0.0;
  };
  SplitFn split = [&](std::span<const Index> r, int) -> std::optional<SplitResult> {
    const ClassStats s = class_totals(y, weights, r);
    if (s.w0 <= 0.0 || s.w1 <= 0.0) return std::nullopt;
    const auto feats = draw_features(X.cols(), settings.maxFeatures, rng);
    return best_split_gini(X, y, weights, r, feats, tree.minLeaf);
  };
  grow(tree, X, std::vector<Index>(rows.begin(), rows.end()), 0, split, leaf);
  return tree;
}

DecisionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                      const TreeSettings& settings, std::uint64_t seed) {
  std::vector<Index> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::mt19937_64 rng(seed);
  return tree_fit(X, y, Eigen::VectorXd(), rows, settings, rng);
}

// ---------------------------------------------------------------------------

ForestModel forest_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                       const ForestSettings& settings) {
  if (settings.nTrees < 1) throw Error(ErrorCode::InvalidArgument, "forest needs at least one tree");
  if (X.rows() == 0) throw Error(ErrorCode::InvalidArgument, "forest needs training rows");
  const Index d = X.cols();
  ForestModel model;
  model.seed = settings.seed;
  model.maxFeatures = settings.maxFeatures > 0
                          ? static_cast<int>(std::min<Index>(settings.maxFeatures, d))
                          : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  model.maxFeatures = std::max(1, model.maxFeatures);
  const TreeSettings ts{settings.maxDepth, settings.minLeaf, model.maxFeatures};
  const auto n = static_cast<std::size_t>(X.rows());
  for (int t = 0; t < settings.nTrees; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(settings.seed),
                      static_cast<std::uint32_t>(settings.seed >> 32), static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::vector<Index> rows(n);
    if (settings.bootstrap) {
      std::uniform_int_distribution<Index> pick(0, X.rows() - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    model.trees.push_back(tree_fit(X, y, Eigen::VectorXd(), rows, ts, rng));
  }
  return model;
}

double forest_predict_proba(const ForestModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.predict(row);
  return sum / static_cast<double>(model.trees.size());
}

Eigen::VectorXd forest_predict_proba_batch(const ForestModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = forest_predict_proba(model, X.row(i));
  return out;
}

Json ForestModel::to_json() const {
  Json trees_ = Json::array();
  for (const auto& t : trees) trees_.push_back(t.to_json());
  return Json{{"maxFeatures", maxFeatures}, {"seed", seed}, {"trees", trees_}};
}

ForestModel ForestModel::from_json(const Json& j) {
  ForestModel m;
  m.maxFeatures = j.at("maxFeatures").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& t : j.at("trees")) m.trees.push_back(DecisionTree::from_json(t));
  return m;
}

}  // namespace crs
