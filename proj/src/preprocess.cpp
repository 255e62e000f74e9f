#include "crs/preprocess.hpp"

#include <cmath>

#include "crs/error.hpp"

namespace crs {

FeatureTransform FeatureTransform::fit(const Eigen::MatrixXd& X, const FeatureInfo& info,
                                       Options options) {
  if (info.size() != X.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "feature info does not match matrix width");
  }
  FeatureTransform t;
  t.options_ = options;
  t.info_ = info;
  t.mean_ = Eigen::VectorXd::Zero(X.cols());
  t.scale_ = Eigen::VectorXd::Ones(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    const bool categorical = info.kinds[static_cast<std::size_t>(j)] == FeatureKind::Categorical;
    if (categorical && (options.oneHot || !options.standardizeAll)) continue;
    const double mean = X.col(j).mean();
    const double var = X.rows() > 0 ? (X.col(j).array() - mean).square().mean() : 0.0;
    t.mean_(j) = mean;
    t.scale_(j) = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return t;
}

Index FeatureTransform::output_cols() const {
  if (!options_.oneHot) return mean_.size();
  Index n = 0;
  for (Index j = 0; j < mean_.size(); ++j) {
    const auto c = static_cast<std::size_t>(j);
    n += info_.kinds[c] == FeatureKind::Categorical ? info_.cardinalities[c] - 1 : 1;
  }
  return n;
}

Eigen::MatrixXd FeatureTransform::apply(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(mean_.size()) +
                                                  " columns, got " + std::to_string(X.cols()));
  }
  if (!options_.oneHot) {
    return (X.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), output_cols());
  Index at = 0;
  for (Index j = 0; j < X.cols(); ++j) {
    const auto c = static_cast<std::size_t>(j);
    if (info_.kinds[c] == FeatureKind::Categorical) {
      const int levels = info_.cardinalities[c];
      for (Index i = 0; i < X.rows(); ++i) {
        const auto code = static_cast<int>(std::lround(X(i, j)));
        if (code >= 1 && code < levels) out(i, at + code - 1) = 1.0;
      }
      at += levels - 1;
    } else {
      out.col(at) = (X.col(j).array() - mean_(j)) / scale_(j);
      ++at;
    }
  }
  return out;
}

Json FeatureTransform::to_json() const {
  Json kinds = Json::array();
  for (auto k : info_.kinds) kinds.push_back(k == FeatureKind::Categorical ? "categorical" : "continuous");
  return Json{{"standardizeAll", options_.standardizeAll},
              {"oneHot", options_.oneHot},
              {"names", info_.names},
              {"kinds", kinds},
              {"cardinalities", info_.cardinalities},
              {"mean", to_json_array(mean_)},
              {"scale", to_json_array(scale_)}};
}

FeatureTransform FeatureTransform::from_json(const Json& j) {
  FeatureTransform t;
  t.options_.standardizeAll = j.at("standardizeAll").get<bool>();
  t.options_.oneHot = j.at("oneHot").get<bool>();
  t.info_.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds")) {
    t.info_.kinds.push_back(k.get<std::string>() == "categorical" ? FeatureKind::Categorical
                                                                  : FeatureKind::Continuous);
  }
  t.info_.cardinalities = j.at("cardinalities").get<std::vector<int>>();
  t.mean_ = vector_from_json(j.at("mean"));
  t.scale_ = vector_from_json(j.at("scale"));
  return t;
}

}  // namespace crs
