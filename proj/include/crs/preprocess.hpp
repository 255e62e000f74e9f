#pragma once

#include <Eigen/Dense>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

/// Column transform fit on training rows and replayed at inference:
/// z-scores continuous columns (or every column), optionally expands
/// categoricals into reference-coded indicators (code 0 is the reference).
class FeatureTransform {
 public:
  struct Options {
    bool standardizeAll = false;
    bool oneHot = false;
  };

  FeatureTransform() = default;

  static FeatureTransform fit(const Eigen::MatrixXd& X, const FeatureInfo& info, Options options);
  static FeatureTransform fit(const Eigen::MatrixXd& X, const FeatureInfo& info) {
    return fit(X, info, Options{});
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  Index input_cols() const { return mean_.size(); }
  Index output_cols() const;

  Json to_json() const;
  static FeatureTransform from_json(const Json& j);

 private:
  Options options_;
  FeatureInfo info_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

}  // namespace crs
