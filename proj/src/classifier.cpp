#include "crs/classifier.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "crs/ensemble.hpp"
#include "crs/error.hpp"
#include "crs/eval.hpp"
#include "crs/linear.hpp"
#include "crs/mlp.hpp"
#include "crs/preprocess.hpp"
#include "crs/svm.hpp"
#include "crs/tree.hpp"

namespace crs {

Json feature_info_to_json(const FeatureInfo& info) {
  Json kinds = Json::array();
  for (auto k : info.kinds) kinds.push_back(k == FeatureKind::Categorical ? "categorical" : "continuous");
  return Json{{"names", info.names}, {"kinds", kinds}, {"cardinalities", info.cardinalities}};
}

FeatureInfo feature_info_from_json(const Json& j) {
  FeatureInfo info;
  info.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds")) {
    info.kinds.push_back(k.get<std::string>() == "categorical" ? FeatureKind::Categorical
                                                               : FeatureKind::Continuous);
  }
  info.cardinalities = j.at("cardinalities").get<std::vector<int>>();
  return info;
}

Json Classifier::to_json() const {
  if (!fitted_) throw Error(ErrorCode::InvalidArgument, kind() + " model is not fitted");
  return Json{{"kind", kind()},
              {"config", config_},
              {"features", feature_info_to_json(features_)},
              {"state", state_json()}};
}

Eigen::VectorXi Classifier::predict(const Eigen::MatrixXd& X, double threshold) const {
  return threshold_labels(predict_proba(X), threshold);
}

double Classifier::predict_proba_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  const Eigen::MatrixXd X = row;
  return predict_proba(X)(0);
}

void Classifier::check_width(const Eigen::MatrixXd& X) const {
  if (!fitted_) throw Error(ErrorCode::InvalidArgument, kind() + " model is not fitted");
  if (X.cols() != features_.size()) {
    throw Error(ErrorCode::DimensionMismatch, kind() + " expects " + std::to_string(features_.size()) +
                                                  " columns, got " + std::to_string(X.cols()));
  }
}

void Classifier::begin_fit(const LabeledDataset& train) {
  if (train.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (train.count(0) == 0 || train.count(1) == 0) {
    throw Error(ErrorCode::DegenerateClass, kind() + " training needs both classes");
  }
  features_ = train.features.size() == train.cols() ? train.features
                                                    : FeatureInfo::all_continuous(train.cols());
  fitted_ = false;
}

namespace {

template <typename T>
T opt(const Json& c, const char* key, T fallback) {
  return c.contains(key) ? c.at(key).get<T>() : fallback;
}

// ---------------------------------------------------------------------------

class LogisticClassifier final : public Classifier {
 public:
  explicit LogisticClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "lr"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    transform_ = FeatureTransform::fit(train.X, features_, {false, opt(config_, "oneHot", true)});
    const Eigen::MatrixXd Z = transform_.apply(train.X);
    LogisticSettings s = settings();
    const auto grid = opt(config_, "lambdaGrid", std::vector<double>{});
    if (!grid.empty()) {
      const int folds = opt(config_, "cvFolds", 5);
      s.lambda = select_lambda(Z, train.y, s, grid, folds, opt<std::uint64_t>(config_, "seed", 0));
    }
    model_ = logreg_fit(Z, train.y, s);
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return logreg_predict_proba_batch(model_, transform_.apply(X));
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<LogisticClassifier>(config_);
  }

 protected:
  Json state_json() const override {
    return Json{{"transform", transform_.to_json()}, {"model", model_.to_json()}};
  }
  void load_state(const Json& j) override {
    transform_ = FeatureTransform::from_json(j.at("transform"));
    model_ = LogisticModel::from_json(j.at("model"));
  }

 private:
  LogisticSettings settings() const {
    LogisticSettings s;
    s.penalty = opt<std::string>(config_, "penalty", "l2") == "l1" ? Penalty::L1 : Penalty::L2;
    s.lambda = opt(config_, "lambda", 1.0);
    s.maxEpochs = opt(config_, "maxEpochs", 5000);
    s.classWeighting = opt(config_, "classWeighting", false);
    return s;
  }

  /// Mean held-out log-loss per grid value; first minimum wins.
  static double select_lambda(const Eigen::MatrixXd& Z, const Eigen::VectorXi& y, LogisticSettings s,
                              const std::vector<double>& grid, int folds, std::uint64_t seed) {
    const auto fold = stratified_folds(y, folds, seed);
    double best = grid.front(), bestLoss = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
      s.lambda = lambda;
      double loss = 0.0;
      for (int k = 0; k < folds; ++k) {
        std::vector<Index> tr, te;
        for (Index i = 0; i < y.size(); ++i) (fold[static_cast<std::size_t>(i)] == k ? te : tr).push_back(i);
        const LogisticModel m = logreg_fit(Z(tr, Eigen::all), y(tr), s);
        const Eigen::VectorXd p = logreg_predict_proba_batch(m, Z(te, Eigen::all));
        for (std::size_t t = 0; t < te.size(); ++t) {
          const double q = std::clamp(p(static_cast<Index>(t)), 1e-12, 1.0 - 1e-12);
          loss -= y(te[t]) == 1 ? std::log(q) : std::log(1.0 - q);
        }
      }
      if (loss < bestLoss) {
        bestLoss = loss;
        best = lambda;
      }
    }
    return best;
  }

  FeatureTransform transform_;
  LogisticModel model_;
};

// ---------------------------------------------------------------------------

class SvmClassifier final : public Classifier {
 public:
  explicit SvmClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "svm"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    transform_ = FeatureTransform::fit(train.X, features_, {true, opt(config_, "oneHot", true)});
    SvmSettings s;
    s.kernel = opt<std::string>(config_, "kernel", "rbf") == "linear" ? Kernel::linear()
                                                                       : Kernel::rbf(opt(config_, "gamma", 0.0));
    s.C = opt(config_, "C", 1.0);
    s.tol = opt(config_, "tol", 1e-3);
    s.seed = opt<std::uint64_t>(config_, "seed", 0) + 1;
    model_ = svm_fit(transform_.apply(train.X), train.y, s);
    fitted_ = true;
  }

  /// Uncalibrated: sigmoid of the decision value.
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return sigmoid(svm_decision_batch(model_, transform_.apply(X)).array()).matrix();
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<SvmClassifier>(config_);
  }

 protected:
  Json state_json() const override {
    return Json{{"transform", transform_.to_json()}, {"model", model_.to_json()}};
  }
  void load_state(const Json& j) override {
    transform_ = FeatureTransform::from_json(j.at("transform"));
    model_ = SvmModel::from_json(j.at("model"));
  }

 private:
  FeatureTransform transform_;
  SvmModel model_;
};

// ---------------------------------------------------------------------------

class NaiveBayesClassifier final : public Classifier {
 public:
  explicit NaiveBayesClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "nb"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    NaiveBayesSettings s;
    s.varianceFloor = opt(config_, "varianceFloor", 1e-9);
    s.alpha = opt(config_, "alpha", 1.0);
    model_ = nb_fit(train.X, train.y, features_, s);
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return nb_predict_proba_batch(model_, X);
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<NaiveBayesClassifier>(config_);
  }

 protected:
  Json state_json() const override { return model_.to_json(); }
  void load_state(const Json& j) override { model_ = NaiveBayesModel::from_json(j); }

 private:
  NaiveBayesModel model_;
};

// ---------------------------------------------------------------------------

class ForestClassifier final : public Classifier {
 public:
  explicit ForestClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "rf"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    ForestSettings s;
    s.nTrees = opt(config_, "nTrees", 200);
    s.maxFeatures = opt(config_, "maxFeatures", 0);
    s.maxDepth = opt(config_, "maxDepth", -1);
    s.minLeaf = opt(config_, "minLeaf", 2);
    s.bootstrap = opt(config_, "bootstrap", true);
    s.seed = opt<std::uint64_t>(config_, "seed", 0);
    model_ = forest_fit(train.X, train.y, s);
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return forest_predict_proba_batch(model_, X);
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<ForestClassifier>(config_);
  }

 protected:
  Json state_json() const override { return model_.to_json(); }
  void load_state(const Json& j) override { model_ = ForestModel::from_json(j); }

 private:
  ForestModel model_;
};

// ---------------------------------------------------------------------------

class BoostClassifier final : public Classifier {
 public:
  explicit BoostClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "xgb"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    BoostSettings s;
    s.nEstimators = opt(config_, "nEstimators", 200);
    s.maxDepth = opt(config_, "maxDepth", 3);
    s.learningRate = opt(config_, "learningRate", 0.05);
    s.subsample = opt(config_, "subsample", 0.8);
    s.colsample = opt(config_, "colsample", 1.0);
    s.lambda = opt(config_, "lambda", 1.0);
    s.gamma = opt(config_, "gamma", 0.0);
    s.earlyStoppingRounds = opt(config_, "earlyStoppingRounds", 10);
    s.seed = opt<std::uint64_t>(config_, "seed", 0);
    const double validFraction = opt(config_, "validationFraction", 0.0);
    if (validFraction > 0.0) {
      const auto split = stratified_split(train.y, validFraction, s.seed);
      const Eigen::MatrixXd Xv = train.X(split.testRows, Eigen::all);
      const Eigen::VectorXi yv = train.y(split.testRows);
      model_ = boost_fit(train.X(split.trainRows, Eigen::all), train.y(split.trainRows), s, nullptr,
                         &Xv, &yv);
    } else {
      model_ = boost_fit(train.X, train.y, s);
    }
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return boost_predict_proba_batch(model_, X);
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<BoostClassifier>(config_);
  }

 protected:
  Json state_json() const override { return model_.to_json(); }
  void load_state(const Json& j) override { model_ = BoostModel::from_json(j); }

 private:
  BoostModel model_;
};

// ---------------------------------------------------------------------------

class MlpClassifier final : public Classifier {
 public:
  explicit MlpClassifier(Json c) : Classifier(std::move(c)) {}
  std::string kind() const override { return "mlp"; }

  void fit(const LabeledDataset& train) override {
    begin_fit(train);
    transform_ = FeatureTransform::fit(train.X, features_, {false, opt(config_, "oneHot", true)});
    const Eigen::MatrixXd Z = transform_.apply(train.X);
    MlpSettings s;
    s.width = opt(config_, "width", 400);
    s.lambda = opt(config_, "lambda", 1e-4);
    s.classWeighting = opt(config_, "classWeighting", true);
    s.batchSize = opt(config_, "batchSize", 32);
    s.learningRate = opt(config_, "learningRate", 1e-3);
    s.momentum = opt(config_, "momentum", 0.9);
    s.patience = opt(config_, "patience", 20);
    s.maxEpochs = opt(config_, "maxEpochs", 2000);
    s.validationFraction = opt(config_, "validationFraction", 0.15);
    s.seed = opt<std::uint64_t>(config_, "seed", 0);
    const auto grid = opt(config_, "widthGrid", std::vector<int>{});
    if (!grid.empty()) {
      sweep_ = width_sweep(Z, train.y, grid, opt(config_, "sweepFolds", 5), s, s.seed);
      s.width = sweep_.chosenWidth;
    }
    model_ = mlp_fit(Z, train.y, s, &trace_);
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_width(X);
    return mlp_predict_proba(model_, transform_.apply(X));
  }

  std::unique_ptr<Classifier> clone_unfitted() const override {
    return std::make_unique<MlpClassifier>(config_);
  }

 protected:
  Json state_json() const override {
    Json sweep = Json::array();
    for (const auto& s : sweep_.scores) {
      sweep.push_back(Json{{"width", s.width},
                           {"accuracy", s.accuracy},
                           {"weightedF1", s.weightedF1},
                           {"class0F1", s.class0F1},
                           {"class1F1", s.class1F1}});
    }
    return Json{{"transform", transform_.to_json()},
                {"model", model_.to_json()},
                {"sweep", sweep},
                {"stoppedEpoch", trace_.stoppedEpoch},
                {"bestEpoch", trace_.bestEpoch},
                {"stopReason", trace_.stopReason}};
  }
  void load_state(const Json& j) override {
    transform_ = FeatureTransform::from_json(j.at("transform"));
    model_ = MlpModel::from_json(j.at("model"));
  }

 private:
  FeatureTransform transform_;
  MlpModel model_;
  TrainTrace trace_;
  SweepResult sweep_;
};

}  // namespace

// ---------------------------------------------------------------------------

FunctionClassifier::FunctionClassifier(std::string name, Fn fn)
    : Classifier(Json::object()), name_(std::move(name)), fn_(std::move(fn)) {}

void FunctionClassifier::fit(const LabeledDataset& train) {
  features_ = train.features.size() == train.cols() ? train.features
                                                    : FeatureInfo::all_continuous(train.cols());
  fitted_ = true;
}

Eigen::VectorXd FunctionClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  check_width(X);
  Eigen::VectorXd p(X.rows());
  for (Index i = 0; i < X.rows(); ++i) p(i) = fn_(X.row(i));
  return p;
}

std::unique_ptr<Classifier> FunctionClassifier::clone_unfitted() const {
  return std::make_unique<FunctionClassifier>(name_, fn_);
}

Json FunctionClassifier::state_json() const {
  throw Error(ErrorCode::InvalidArgument, "function classifier '" + name_ + "' cannot be serialized");
}

void FunctionClassifier::load_state(const Json&) {
  throw Error(ErrorCode::InvalidArgument, "function classifier cannot be loaded");
}

std::vector<std::string> base_model_kinds() { return {"lr", "svm", "nb", "rf", "xgb", "mlp"}; }

std::unique_ptr<Classifier> make_classifier(const std::string& kind, const Json& config) {
  const Json c = config.is_null() ? Json::object() : config;
  if (kind == "lr") return std::make_unique<LogisticClassifier>(c);
  if (kind == "svm") return std::make_unique<SvmClassifier>(c);
  if (kind == "nb") return std::make_unique<NaiveBayesClassifier>(c);
  if (kind == "rf") return std::make_unique<ForestClassifier>(c);
  if (kind == "xgb") return std::make_unique<BoostClassifier>(c);
  if (kind == "mlp") return std::make_unique<MlpClassifier>(c);
  if (kind == "vote" || kind == "soft" || kind == "stack" || kind == "ada") {
    return make_ensemble(kind, c);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind '" + kind + "'");
}

std::unique_ptr<Classifier> classifier_from_json(const Json& j) {
  auto model = make_classifier(j.at("kind").get<std::string>(), j.at("config"));
  model->features_ = feature_info_from_json(j.at("features"));
  model->load_state(j.at("state"));
  model->fitted_ = true;
  return model;
}

std::string classifier_to_jsonl(const Classifier& model) {
  const Json header{{"format", "crs-model"}, {"version", 1}, {"kind", model.kind()}};
  return header.dump() + "\n" + model.to_json().dump() + "\n";
}

std::unique_ptr<Classifier> classifier_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string headerLine, bodyLine;
  if (!std::getline(in, headerLine) || !std::getline(in, bodyLine)) {
    throw Error(ErrorCode::ParseError, "model file needs a header line and a body line");
  }
  try {
    const Json header = Json::parse(headerLine);
    if (header.value("format", "") != "crs-model") {
      throw Error(ErrorCode::ParseError, "not a crs-model file");
    }
    if (header.value("version", 0) != 1) {
      throw Error(ErrorCode::ParseError, "unsupported model file version");
    }
    return classifier_from_json(Json::parse(bodyLine));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed model file: ") + e.what());
  }
}

void save_classifier(const Classifier& model, const std::filesystem::path& path) {
  write_text(path, classifier_to_jsonl(model));
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path) {
  return classifier_from_jsonl(read_text(path));
}

}  // namespace crs
