#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crs/classifier.hpp"
#include "crs/dataset.hpp"

namespace crs {

// ---------------------------------------------------------------------------
// Permutation importance

struct FeatureImportance {
  std::string feature;
  Index index = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over repeats
};

struct PermImportance {
  std::vector<FeatureImportance> features;  // descending mean
  double baseline = 0.0;                    // balanced accuracy before permuting
  int repeats = 0;
  std::uint64_t seed = 0;

  /// feature,mean_delta_balanced_accuracy,std
  std::string to_csv() const;
};

/// Mean and sample standard deviation of BA(original) - BA(column permuted)
/// over R permutations of one feature column. Throws UnknownFeature,
/// DegenerateClass (test set without both classes), InvalidArgument (R < 1).
FeatureImportance permutation_importance(const Classifier& model, const LabeledDataset& test,
                                         const std::string& feature, int repeats, std::uint64_t seed);
PermImportance permutation_importance(const Classifier& model, const LabeledDataset& test,
                                      int repeats = 30, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Shapley attributions with interventional (background-substitution) value
// function v(S) = mean_b f(x_S, b_notS).

using BatchFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct ShapResult {
  Eigen::VectorXd phi;
  double baseValue = 0.0;  // v(empty) = mean model output over the background
  double fx = 0.0;         // model output at the explained row
  bool exact = false;
  int coalitions = 0;      // value-function evaluations

  double efficiency_residual() const { return phi.sum() + baseValue - fx; }
};

inline constexpr Index kExactShapMaxFeatures = 12;

/// Full enumeration of all 2^d coalitions with weights |S|!(d-|S|-1)!/d!.
ShapResult shap_exact(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background);

/// Kernel-weighted coalition regression under the efficiency constraint.
/// Coalition sizes whose full set fits the remaining budget are enumerated;
/// the rest are sampled in complementary pairs. Throws BudgetTooSmall when
/// budget < 2d + 2.
ShapResult shap_kernel(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background,
                       int budget, std::uint64_t seed);

/// Exact for d <= 12, kernel sampling otherwise.
ShapResult shap_values(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background,
                       int budget, std::uint64_t seed);
ShapResult shap_values(const Classifier& model, const Eigen::RowVectorXd& row,
                       const Eigen::MatrixXd& background, int budget = 2048, std::uint64_t seed = 0);

/// Up to `size` rows drawn stratified by class.
Eigen::MatrixXd shap_background(const LabeledDataset& data, Index size = 100, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// PCA and correlation

struct PcaResult {
  Eigen::MatrixXd loadings;  // d x d, column k = component k (unit norm)
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd explainedVarianceRatio;
  Eigen::VectorXd cumulativeRatio;
  Eigen::MatrixXd scores;  // projected rows
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  /// Smallest component count whose cumulative ratio reaches `fraction`.
  Index components_for(double fraction) const;
};

/// Eigendecomposition of the sample covariance of the (optionally z-scored)
/// columns, components sorted by decreasing eigenvalue, each oriented so its
/// largest-magnitude loading is positive. Throws DegenerateData for fewer
/// than 2 rows or zero total variance.
PcaResult pca(const Eigen::MatrixXd& X, bool standardize = true);

/// Pearson correlation; constant columns correlate 0 with others, 1 with themselves.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X);

}  // namespace crs
