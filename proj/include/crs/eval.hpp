#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crs/dataset.hpp"

namespace crs {

struct SplitAssignment {
  std::vector<Index> trainRows;
  std::vector<Index> testRows;
  std::vector<std::string> trainIds;
  std::vector<std::string> testIds;
  double fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Per-class test size is round-half-up(fraction * classCount); if those do not
/// add up to round(fraction * n) the majority class absorbs the difference.
/// Rows are drawn uniformly within each class. Throws DegenerateClass when a
/// class would end up with an empty train or test side.
SplitAssignment stratified_split(const LabeledDataset& data, double testFraction,
                                 std::uint64_t seed);
SplitAssignment stratified_split(const Eigen::VectorXi& y, double testFraction,
                                 std::uint64_t seed);

/// Fold index in [0, k) for every row, each class dealt round-robin after a
/// seeded shuffle. Throws DegenerateFold when a class has fewer than k rows.
std::vector<int> stratified_folds(const Eigen::VectorXi& y, int k, std::uint64_t seed);

/// counts(t, p): rows with true class t predicted as p.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, 2, 2> counts = Eigen::Matrix<std::int64_t, 2, 2>::Zero();

  std::int64_t total() const { return counts.sum(); }
  static ConfusionMatrix from_rows(std::int64_t tn, std::int64_t fp, std::int64_t fn,
                                   std::int64_t tp);
};

ConfusionMatrix confusion(const Eigen::VectorXi& yTrue, const Eigen::VectorXi& yPred);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct EvalReport {
  ConfusionMatrix cm;
  std::array<ClassMetrics, 2> perClass;
  double accuracy = 0.0;
  double macroF1 = 0.0;
  double weightedF1 = 0.0;
  double macroPrecision = 0.0;
  double macroRecall = 0.0;
  double weightedPrecision = 0.0;
  double weightedRecall = 0.0;
  double balancedAccuracy = 0.0;

  std::string to_jsonl(const std::string& model) const;
  /// Aligned-column classification report followed by the confusion matrix.
  std::string to_text(const std::string& model) const;
};

/// Standard definitions; 0/0 is taken as 0.
EvalReport report(const ConfusionMatrix& cm);

double balanced_accuracy(const Eigen::VectorXi& yTrue, const Eigen::VectorXi& yPred);

/// 1 where p >= threshold.
Eigen::VectorXi threshold_labels(const Eigen::VectorXd& probabilities, double threshold = 0.5);

}  // namespace crs
