#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

/// A fitted-or-fittable binary classifier over encoded feature rows. Each
/// implementation owns its preprocessing, so callers always pass the encoded
/// columns of a LabeledDataset.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual void fit(const LabeledDataset& train) = 0;
  /// p(y = 1 | x) per row. Throws DimensionMismatch on width mismatch.
  virtual Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const = 0;
  /// Same configuration, no fitted state.
  virtual std::unique_ptr<Classifier> clone_unfitted() const = 0;

  /// {"kind", "config", "features", "state"}; throws InvalidArgument when unfitted.
  Json to_json() const;

  /// 1 where p >= threshold.
  virtual Eigen::VectorXi predict(const Eigen::MatrixXd& X, double threshold = 0.5) const;
  double predict_proba_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  bool fitted() const { return fitted_; }
  const FeatureInfo& features() const { return features_; }
  const Json& config() const { return config_; }

 protected:
  explicit Classifier(Json config) : config_(std::move(config)) {}
  virtual Json state_json() const = 0;
  virtual void load_state(const Json& state) = 0;
  void check_width(const Eigen::MatrixXd& X) const;
  void begin_fit(const LabeledDataset& train);

  Json config_;
  FeatureInfo features_;
  bool fitted_ = false;

  friend std::unique_ptr<Classifier> classifier_from_json(const Json& j);
};

/// Kinds of the six base learners, in roster order.
std::vector<std::string> base_model_kinds();

/// Built from a kind ("lr", "svm", "nb", "rf", "xgb", "mlp", "vote", "soft",
/// "stack", "ada") and its config object; missing keys take defaults.
/// Throws InvalidArgument for an unknown kind.
std::unique_ptr<Classifier> make_classifier(const std::string& kind, const Json& config = Json::object());

std::unique_ptr<Classifier> classifier_from_json(const Json& j);

/// Two-line record file: {"format":"crs-model","version":1,"kind":...} then the body.
std::string classifier_to_jsonl(const Classifier& model);
std::unique_ptr<Classifier> classifier_from_jsonl(const std::string& text);
void save_classifier(const Classifier& model, const std::filesystem::path& path);
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path);

/// Wraps a plain function of the encoded row; fit only records the columns.
/// Not serializable. Handy for tests and fixed rules.
class FunctionClassifier final : public Classifier {
 public:
  using Fn = std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>;
  FunctionClassifier(std::string name, Fn fn);

  std::string kind() const override { return name_; }
  void fit(const LabeledDataset& train) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override;
  std::unique_ptr<Classifier> clone_unfitted() const override;

 protected:
  Json state_json() const override;
  void load_state(const Json&) override;

 private:
  std::string name_;
  Fn fn_;
};

Json feature_info_to_json(const FeatureInfo& info);
FeatureInfo feature_info_from_json(const Json& j);

}  // namespace crs
