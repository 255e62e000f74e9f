#include "crs/linear.hpp"

#include <Eigen/Eigenvalues>
#include <numbers>

#include "crs/error.hpp"

namespace crs {

namespace {

void check_binary_classes(const Eigen::VectorXi& y, Index minPerClass, const char* who) {
  const Index ones = (y.array() == 1).count();
  const Index zeros = (y.array() == 0).count();
  if (ones + zeros != y.size()) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  if (ones < minPerClass || zeros < minPerClass) {
    throw Error(ErrorCode::DegenerateClass, std::string(who) + " needs at least " +
                                                std::to_string(minPerClass) + " rows per class");
  }
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

const char* penalty_name(Penalty p) { return p == Penalty::L1 ? "l1" : "l2"; }

}  // namespace

Eigen::VectorXd inverse_prevalence_weights(const Eigen::VectorXi& y) {
  const double n = static_cast<double>(y.size());
  const double ones = static_cast<double>((y.array() == 1).count());
  const double zeros = n - ones;
  Eigen::VectorXd c(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double k = y(i) == 1 ? ones : zeros;
    c(i) = k > 0.0 ? n / (2.0 * k) : 0.0;
  }
  return c;
}

double logreg_objective(const LogisticModel& model, const Eigen::MatrixXd& X,
                        const Eigen::VectorXi& y, const Eigen::VectorXd& sampleWeights) {
  const Eigen::VectorXd z = (X * model.w).array() + model.b;
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    loss += sampleWeights(i) * (softplus(z(i)) - (y(i) == 1 ? z(i) : 0.0));
  }
  const double reg = model.penalty == Penalty::L2 ? model.w.squaredNorm() : model.w.lpNorm<1>();
  return loss + model.lambda * reg;
}

void logreg_gradient(const LogisticModel& model, const Eigen::MatrixXd& X,
                     const Eigen::VectorXi& y, const Eigen::VectorXd& sampleWeights,
                     Eigen::VectorXd& gradW, double& gradB) {
  const Eigen::ArrayXd z = (X * model.w).array() + model.b;
  const Eigen::VectorXd residual =
      (sigmoid(z) - y.cast<double>().array()) * sampleWeights.array();
  gradW = X.transpose() * residual;
  gradB = residual.sum();
  if (model.penalty == Penalty::L2) {
    gradW += 2.0 * model.lambda * model.w;
  } else {
    gradW += model.lambda * model.w.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
  }
}

LogisticModel logreg_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                         const LogisticSettings& settings, LogisticTrace* trace) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (settings.lambda < 0.0) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  check_binary_classes(y, 1, "logistic regression");

  const Eigen::VectorXd c = settings.classWeighting ? inverse_prevalence_weights(y)
                                                    : Eigen::VectorXd::Ones(y.size());
  LogisticModel model;
  model.penalty = settings.penalty;
  model.lambda = settings.lambda;
  model.w = Eigen::VectorXd::Zero(X.cols());
  model.b = 0.0;

  double step = settings.learningRate;
  double stepB = step;
  if (step <= 0.0) {
    // Hessian of the smooth part is bounded by 0.25 * Xa^T C Xa plus 2 lambda
    // on the weights only (L2), so the unpenalized intercept keeps the data step.
    Eigen::MatrixXd Xa(X.rows(), X.cols() + 1);
    Xa << X, Eigen::VectorXd::Ones(X.rows());
    const Eigen::MatrixXd gram = Xa.transpose() * c.asDiagonal() * Xa;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double curvature = std::max(0.25 * eig.eigenvalues().maxCoeff(), 1e-12);
    stepB = 1.0 / curvature;
    step = settings.penalty == Penalty::L2 ? 1.0 / (curvature + 2.0 * settings.lambda) : stepB;
  }

  // The proximal step handles the L1 term; only the smooth part is differentiated.
  LogisticModel smooth = model;
  if (settings.penalty == Penalty::L1) smooth.lambda = 0.0;

  Eigen::VectorXd velocityW = Eigen::VectorXd::Zero(X.cols());
  double velocityB = 0.0;
  Eigen::VectorXd gw;
  double gb = 0.0;
  double previous = logreg_objective(model, X, y, c);
  if (trace) {
    trace->objective.assign(1, previous);
    trace->converged = false;
  }
  for (int epoch = 0; epoch < settings.maxEpochs; ++epoch) {
    smooth.w = model.w;
    smooth.b = model.b;
    logreg_gradient(smooth, X, y, c, gw, gb);
    velocityW = settings.momentum * velocityW - step * gw;
    velocityB = settings.momentum * velocityB - stepB * gb;
    model.w += velocityW;
    model.b += velocityB;
    if (settings.penalty == Penalty::L1) {
      const double t = step * settings.lambda;
      model.w = model.w.unaryExpr([t](double v) { return soft_threshold(v, t); });
    }
    const double current = logreg_objective(model, X, y, c);
    if (!std::isfinite(current)) {
      throw Error(ErrorCode::NonFinite, "logistic regression diverged; lower the learning rate");
    }
    if (trace) trace->objective.push_back(current);
    if (std::fabs(previous - current) < settings.tol * std::max(1.0, std::fabs(current))) {
      if (trace) trace->converged = true;
      break;
    }
    previous = current;
  }
  return model;
}

double logreg_predict_proba(const LogisticModel& model,
                            const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != model.w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "row has " + std::to_string(row.size()) +
                                                  " features, model expects " +
                                                  std::to_string(model.w.size()));
  }
  return sigmoid(row.dot(model.w) + model.b);
}

Eigen::VectorXd logreg_predict_proba_batch(const LogisticModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "matrix width does not match model");
  }
  const Eigen::ArrayXd z = (X * model.w).array() + model.b;
  return sigmoid(z).matrix();
}

Json LogisticModel::to_json() const {
  return Json{{"w", to_json_array(w)}, {"b", b}, {"penalty", penalty_name(penalty)}, {"lambda", lambda}};
}

LogisticModel LogisticModel::from_json(const Json& j) {
  LogisticModel m;
  m.w = vector_from_json(j.at("w"));
  m.b = j.at("b").get<double>();
  m.penalty = j.at("penalty").get<std::string>() == "l1" ? Penalty::L1 : Penalty::L2;
  m.lambda = j.at("lambda").get<double>();
  return m;
}

// ---------------------------------------------------------------------------

NaiveBayesModel nb_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const FeatureInfo& info,
                       const NaiveBayesSettings& settings) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (info.size() != X.cols()) throw Error(ErrorCode::DimensionMismatch, "feature info width");
  check_binary_classes(y, 2, "naive Bayes");

  NaiveBayesModel m;
  m.info = info;
  const Index d = X.cols();
  std::array<Index, 2> count{(y.array() == 0).count(), (y.array() == 1).count()};
  const double n = static_cast<double>(y.size());
  m.priors = {static_cast<double>(count[0]) / n, static_cast<double>(count[1]) / n};
  m.mean = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, d);
  m.var = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, d);
  m.tables.assign(static_cast<std::size_t>(d), Eigen::MatrixXd());
  m.unseen.assign(static_cast<std::size_t>(d), {0.0, 0.0});

  for (Index j = 0; j < d; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const bool categorical = info.kinds[jj] == FeatureKind::Categorical;
    if (categorical) {
      const int levels = std::max(info.cardinalities[jj], 1);
      Eigen::MatrixXd table = Eigen::MatrixXd::Zero(2, levels);
      for (Index i = 0; i < X.rows(); ++i) {
        const auto code = static_cast<long>(std::lround(X(i, j)));
        if (code >= 0 && code < levels) table(y(i), code) += 1.0;
      }
      for (int c = 0; c < 2; ++c) {
        const double denom = static_cast<double>(count[static_cast<std::size_t>(c)]) +
                             settings.alpha * levels;
        table.row(c) = (table.row(c).array() + settings.alpha) / denom;
        m.unseen[jj][static_cast<std::size_t>(c)] = settings.alpha / denom;
      }
      m.tables[jj] = std::move(table);
    } else {
      for (int c = 0; c < 2; ++c) {
        double sum = 0.0;
        for (Index i = 0; i < X.rows(); ++i) sum += y(i) == c ? X(i, j) : 0.0;
        const double mean = sum / static_cast<double>(count[static_cast<std::size_t>(c)]);
        double ss = 0.0;
        for (Index i = 0; i < X.rows(); ++i) {
          if (y(i) == c) ss += (X(i, j) - mean) * (X(i, j) - mean);
        }
        m.mean(c, j) = mean;
        m.var(c, j) = std::max(ss / static_cast<double>(count[static_cast<std::size_t>(c)]),
                               settings.varianceFloor);
      }
    }
  }
  return m;
}

double nb_log_joint(const NaiveBayesModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                    int cls) {
  if (row.size() != model.info.size()) {
    throw Error(ErrorCode::DimensionMismatch, "row width does not match naive Bayes model");
  }
  double lp = std::log(model.priors[static_cast<std::size_t>(cls)]);
  for (Index j = 0; j < row.size(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    if (model.info.kinds[jj] == FeatureKind::Categorical) {
      const auto& table = model.tables[jj];
      const auto code = static_cast<long>(std::lround(row(j)));
      const double p = (code >= 0 && code < table.cols())
                           ? table(cls, code)
                           : model.unseen[jj][static_cast<std::size_t>(cls)];
      lp += std::log(p);
    } else {
      const double var = model.var(cls, j);
      const double diff = row(j) - model.mean(cls, j);
      lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * diff * diff / var;
    }
  }
  return lp;
}

double nb_predict_proba(const NaiveBayesModel& model,
                        const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double l0 = nb_log_joint(model, row, 0);
  const double l1 = nb_log_joint(model, row, 1);
  return sigmoid(l1 - l0);
}

Eigen::VectorXd nb_predict_proba_batch(const NaiveBayesModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd p(X.rows());
  for (Index i = 0; i < X.rows(); ++i) p(i) = nb_predict_proba(model, X.row(i));
  return p;
}

Json NaiveBayesModel::to_json() const {
  Json tablesJson = Json::array();
  Json unseenJson = Json::array();
  for (std::size_t j = 0; j < tables.size(); ++j) {
    tablesJson.push_back(tables[j].size() ? to_json_matrix(tables[j]) : Json(nullptr));
    unseenJson.push_back({unseen[j][0], unseen[j][1]});
  }
  Json kinds = Json::array();
  for (auto k : info.kinds) kinds.push_back(k == FeatureKind::Categorical ? "categorical" : "continuous");
  return Json{{"priors", {priors[0], priors[1]}},
              {"names", info.names},
              {"kinds", kinds},
              {"cardinalities", info.cardinalities},
              {"mean", to_json_matrix(mean)},
              {"var", to_json_matrix(var)},
              {"tables", tablesJson},
              {"unseen", unseenJson}};
}

NaiveBayesModel NaiveBayesModel::from_json(const Json& j) {
  NaiveBayesModel m;
  m.priors = {j.at("priors").at(0).get<double>(), j.at("priors").at(1).get<double>()};
  m.info.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds")) {
    m.info.kinds.push_back(k.get<std::string>() == "categorical" ? FeatureKind::Categorical
                                                                 : FeatureKind::Continuous);
  }
  m.info.cardinalities = j.at("cardinalities").get<std::vector<int>>();
  m.mean = matrix_from_json(j.at("mean"));
  m.var = matrix_from_json(j.at("var"));
  for (const auto& t : j.at("tables")) {
    m.tables.push_back(t.is_null() ? Eigen::MatrixXd() : matrix_from_json(t));
  }
  for (const auto& u : j.at("unseen")) m.unseen.push_back({u.at(0).get<double>(), u.at(1).get<double>()});
  return m;
}

}  // namespace crs
