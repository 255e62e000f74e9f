#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crs/csv.hpp"
#include "crs/schema.hpp"

namespace crs {

using Index = Eigen::Index;

inline constexpr std::string_view kIdColumn = "SUBJECT_ID";
inline constexpr std::string_view kOutcomeColumn = "OUTCOME";

/// Column metadata the learners need: kind per column and, for categoricals,
/// the number of declared codes.
struct FeatureInfo {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  std::vector<int> cardinalities;

  static FeatureInfo from_schema(const Schema& schema);
  static FeatureInfo all_continuous(Index d);
  Index size() const { return static_cast<Index>(names.size()); }
  bool operator==(const FeatureInfo&) const = default;
};

/// Encoded feature matrix (rows = patients) with binary outcome labels.
struct LabeledDataset {
  std::vector<std::string> ids;
  FeatureInfo features;
  Eigen::MatrixXd X;
  Eigen::VectorXi y;

  Index rows() const { return X.rows(); }
  Index cols() const { return X.cols(); }
  Index count(int label) const { return (y.array() == label).count(); }

  LabeledDataset subset(std::span<const Index> rows) const;
  LabeledDataset subset_by_id(std::span<const std::string> wanted) const;

  /// SUBJECT_ID, one column per feature, OUTCOME.
  CsvTable to_csv() const;
  static LabeledDataset from_csv(const CsvTable& table, const Schema& schema);
};

/// Builds a dataset from a plain matrix; every column is treated as continuous.
LabeledDataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXi y);

std::string format_number(double v);

}  // namespace crs
