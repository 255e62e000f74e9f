#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

/// 1 - sum_k p_k^2 over binary labels. Throws InvalidArgument when empty.
double gini(std::span<const int> labels);
/// Weighted form: p_1 = w1 / (w0 + w1).
double gini_weighted(double w0, double w1);

/// 1/2 [GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)] - gamma
double boost_gain(double GL, double HL, double GR, double HR, double lambda, double gamma);

/// Threshold between two consecutive distinct sorted values a < b; always
/// satisfies a <= t < b so that "x <= t goes left" reproduces the partition.
double split_midpoint(double a, double b);

struct SplitResult {
  Index feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Weighted Gini impurity decrease, parent - (WL/W) left - (WR/W) right.
/// Candidates are midpoints of distinct sorted values with at least minLeaf
/// rows per side; ties go to the lowest feature index, then the lowest
/// threshold. Returns nullopt when no candidate has positive gain.
std::optional<SplitResult> best_split_gini(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                                           const Eigen::VectorXd& weights,
                                           std::span<const Index> rows,
                                           std::span<const Index> features, int minLeaf = 1);

/// Same candidate set and tie rule, scored with boost_gain on per-row
/// gradients g and hessians h.
std::optional<SplitResult> best_split_boost(const Eigen::MatrixXd& X, const Eigen::VectorXd& g,
                                            const Eigen::VectorXd& h, std::span<const Index> rows,
                                            std::span<const Index> features, int minLeaf,
                                            double lambda, double gamma);

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Leaf: class-1 posterior (classification) or score w (boosting).
  double value = 0.0;
  int rows = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int maxDepth = -1;            // -1 = unlimited
  int minLeaf = 1;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  const TreeNode& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  int depth() const;
  int leaf_count() const;
  Index input_cols() const { return inputCols; }

  Index inputCols = 0;

  Json to_json() const;
  static DecisionTree from_json(const Json& j);
};

struct TreeSettings {
  int maxDepth = -1;
  int minLeaf = 1;
  /// Features drawn (without replacement) at every split; 0 = all.
  int maxFeatures = 0;
};

/// Classification tree on the given rows (duplicates allowed) with optional
/// per-row weights (empty = 1). Leaves hold the weighted class-1 frequency.
DecisionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                      const Eigen::VectorXd& weights, std::span<const Index> rows,
                      const TreeSettings& settings, std::mt19937_64& rng);
DecisionTree tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                      const TreeSettings& settings, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Random forest

struct ForestSettings {
  int nTrees = 200;
  int maxFeatures = 0;  // 0 = ceil(sqrt(d))
  int maxDepth = -1;
  int minLeaf = 2;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int maxFeatures = 1;
  std::uint64_t seed = 0;

  Json to_json() const;
  static ForestModel from_json(const Json& j);
};

ForestModel forest_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                       const ForestSettings& settings);
/// Mean of the per-tree leaf posteriors.
double forest_predict_proba(const ForestModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd forest_predict_proba_batch(const ForestModel& model, const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Gradient boosting on the logistic loss with second-order leaf weights.

struct BoostSettings {
  int nEstimators = 200;
  int maxDepth = 3;
  double learningRate = 0.05;
  double subsample = 0.8;
  double colsample = 1.0;
  double lambda = 1.0;
  double gamma = 0.0;
  /// Validation rounds without improvement before stopping (validation set only).
  int earlyStoppingRounds = 10;
  std::uint64_t seed = 0;
};

struct BoostModel {
  double baseScore = 0.0;
  double learningRate = 0.05;
  std::vector<DecisionTree> trees;
  BoostSettings settings;

  double margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  Json to_json() const;
  static BoostModel from_json(const Json& j);
};

struct BoostTrace {
  std::vector<double> trainLoss;  // mean logistic loss after each kept round
  std::vector<double> validLoss;
  int bestRound = 0;
  std::string stopReason;  // "max-rounds" | "no-gain" | "early-stop"
};

/// One regression tree on fixed gradients g and hessians h over `rows`, split
/// greedily by boost_gain up to settings.maxDepth; leaf value -G/(H + lambda).
DecisionTree boost_tree_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                            const std::vector<Index>& rows, const std::vector<Index>& features,
                            const BoostSettings& settings);

/// Mean logistic loss of margins F against 0/1 labels.
double logistic_loss(const Eigen::VectorXd& margins, const Eigen::VectorXi& y);

/// Each round: p = sigmoid(F), g = p - y, h = p(1 - p); leaf weight -G/(H + lambda);
/// F += eta * f_m(x). Halts when the root admits no positive-gain split, or,
/// given validation rows, when validation loss has not improved for
/// earlyStoppingRounds (the best prefix is kept). Throws NonFinite on overflow.
BoostModel boost_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                     const BoostSettings& settings, BoostTrace* trace = nullptr,
                     const Eigen::MatrixXd* validX = nullptr,
                     const Eigen::VectorXi* validY = nullptr);

double boost_predict_proba(const BoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd boost_predict_proba_batch(const BoostModel& model, const Eigen::MatrixXd& X);

}  // namespace crs
