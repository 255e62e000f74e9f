#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "crs/error.hpp"
#include "crs/linear.hpp"
#include "crs/tree.hpp"

namespace crs {

double logistic_loss(const Eigen::VectorXd& margins, const Eigen::VectorXi& y) {
  double sum = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    sum += y(i) == 1 ? softplus(-margins(i)) : softplus(margins(i));
  }
  return y.size() ? sum / static_cast<double>(y.size()) : 0.0;
}

double BoostModel::margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double f = baseScore;
  for (const auto& t : trees) f += learningRate * t.predict(row);
  return f;
}

namespace {

std::vector<Index> sample_without_replacement(Index n, double fraction, std::mt19937_64& rng) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  if (fraction >= 1.0) return all;
  const auto k = std::clamp<Index>(static_cast<Index>(std::lround(fraction * static_cast<double>(n))),
                                   1, n);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

void validate(const BoostSettings& s) {
  if (s.nEstimators < 0 || s.maxDepth < 0 || s.lambda < 0.0 || s.gamma < 0.0 ||
      !(s.subsample > 0.0 && s.subsample <= 1.0) || !(s.colsample > 0.0 && s.colsample <= 1.0) ||
      !(s.learningRate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid boosting hyperparameters");
  }
}

}  // namespace

DecisionTree boost_tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                            const std::vector<Index>& rows, const std::vector<Index>& features,
                            const BoostSettings& s) {
  DecisionTree tree;
  tree.maxDepth = s.maxDepth;
  tree.minLeaf = 1;
  tree.inputCols = X.cols();
  std::function<int(std::vector<Index>, int)> grow = [&](std::vector<Index> r, int depth) -> int {
    double G = 0.0, H = 0.0;
    for (Index i : r) {
      G += g(i);
      H += h(i);
    }
    const int id = static_cast<int>(tree.nodes.size());
    TreeNode leaf;
    leaf.value = -G / (H + s.lambda);
    leaf.rows = static_cast<int>(r.size());
    tree.nodes.push_back(leaf);
    if (s.maxDepth >= 0 && depth >= s.maxDepth) return id;
    const auto best = best_split_boost(X, g, h, r, features, 1, s.lambda, s.gamma);
    if (!best) return id;
    std::vector<Index> left, right;
    for (Index i : r) (X(i, best->feature) <= best->threshold ? left : right).push_back(i);
    const int l = grow(std::move(left), depth + 1);
    const int rr = grow(std::move(right), depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best->feature);
    node.threshold = best->threshold;
    node.left = l;
    node.right = rr;
    return id;
  };
  grow(rows, 0);
  return tree;
}

BoostModel boost_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                     const BoostSettings& settings, BoostTrace* trace,
                     const Eigen::MatrixXd* validX, const Eigen::VectorXi* validY) {
  validate(settings);
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (y.size() == 0) throw Error(ErrorCode::InvalidArgument, "boosting needs training rows");
  const bool useValid = validX && validY && validX->rows() > 0;
  if (useValid && validX->rows() != validY->size()) {
    throw Error(ErrorCode::LengthMismatch, "validation rows and labels differ");
  }

  BoostModel model;
  model.settings = settings;
  model.learningRate = settings.learningRate;
  const double n = static_cast<double>(y.size());
  const double prev = std::clamp(static_cast<double>((y.array() == 1).count()) / n, 1e-6, 1.0 - 1e-6);
  model.baseScore = std::log(prev / (1.0 - prev));

  BoostTrace local;
  BoostTrace& tr = trace ? *trace : local;
  tr = BoostTrace{};
  tr.stopReason = "max-rounds";

  Eigen::VectorXd F = Eigen::VectorXd::Constant(y.size(), model.baseScore);
  Eigen::VectorXd Fv;
  double bestValid = 0.0;
  if (useValid) {
    Fv = Eigen::VectorXd::Constant(validY->size(), model.baseScore);
    bestValid = logistic_loss(Fv, *validY);
  }
  const Eigen::ArrayXd yd = y.cast<double>().array();
  std::mt19937_64 rng(settings.seed);

  for (int m = 0; m < settings.nEstimators; ++m) {
    const Eigen::ArrayXd p = sigmoid(F.array());
    const Eigen::VectorXd g = (p - yd).matrix();
    const Eigen::VectorXd h = (p * (1.0 - p)).matrix();
    const auto rows = sample_without_replacement(y.size(), settings.subsample, rng);
    const auto feats = sample_without_replacement(X.cols(), settings.colsample, rng);
    DecisionTree tree = boost_tree_fit(X, g, h, rows, feats, settings);
    if (tree.nodes.size() == 1) {
      tr.stopReason = "no-gain";
      break;
    }
    for (Index i = 0; i < X.rows(); ++i) F(i) += settings.learningRate * tree.predict(X.row(i));
    if (!F.allFinite()) throw Error(ErrorCode::NonFinite, "boosting scores overflowed");
    model.trees.push_back(std::move(tree));
    tr.trainLoss.push_back(logistic_loss(F, y));

    if (useValid) {
      for (Index i = 0; i < validX->rows(); ++i) {
        Fv(i) += settings.learningRate * model.trees.back().predict(validX->row(i));
      }
      const double vl = logistic_loss(Fv, *validY);
      tr.validLoss.push_back(vl);
      if (vl < bestValid) {
        bestValid = vl;
        tr.bestRound = static_cast<int>(model.trees.size());
      } else if (static_cast<int>(model.trees.size()) - tr.bestRound >= settings.earlyStoppingRounds) {
        tr.stopReason = "early-stop";
        model.trees.resize(static_cast<std::size_t>(tr.bestRound));
        break;
      }
    }
  }
  if (!useValid) tr.bestRound = static_cast<int>(model.trees.size());
  return model;
}

double boost_predict_proba(const BoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return sigmoid(model.margin(row));
}

Eigen::VectorXd boost_predict_proba_batch(const BoostModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = boost_predict_proba(model, X.row(i));
  return out;
}

Json BoostModel::to_json() const {
  Json trees_ = Json::array();
  for (const auto& t : trees) trees_.push_back(t.to_json());
  return Json{{"baseScore", baseScore},
              {"learningRate", learningRate},
              {"nEstimators", settings.nEstimators},
              {"maxDepth", settings.maxDepth},
              {"subsample", settings.subsample},
              {"colsample", settings.colsample},
              {"lambda", settings.lambda},
              {"gamma", settings.gamma},
              {"trees", trees_}};
}

BoostModel BoostModel::from_json(const Json& j) {
  BoostModel m;
  m.baseScore = j.at("baseScore").get<double>();
  m.learningRate = j.at("learningRate").get<double>();
  m.settings.nEstimators = j.at("nEstimators").get<int>();
  m.settings.maxDepth = j.at("maxDepth").get<int>();
  m.settings.subsample = j.at("subsample").get<double>();
  m.settings.colsample = j.at("colsample").get<double>();
  m.settings.lambda = j.at("lambda").get<double>();
  m.settings.gamma = j.at("gamma").get<double>();
  m.settings.learningRate = m.learningRate;
  for (const auto& t : j.at("trees")) m.trees.push_back(DecisionTree::from_json(t));
  return m;
}

}  // namespace crs
