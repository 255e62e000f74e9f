#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <type_traits>
#include <vector>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

/// Logistic function, evaluated without overflow for large |z|.
template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([](Scalar v) { return sigmoid(v); });
}

/// log(1 + exp(z)) without overflow.
template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
Scalar softplus(Scalar z) {
  return z > Scalar(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Per-row loss multipliers n / (2 * n_class): each class carries half the total weight.
Eigen::VectorXd inverse_prevalence_weights(const Eigen::VectorXi& y);

// ---------------------------------------------------------------------------
// Logistic regression

enum class Penalty { L1, L2 };

struct LogisticModel {
  Eigen::VectorXd w;
  double b = 0.0;
  Penalty penalty = Penalty::L2;
  double lambda = 0.0;

  Json to_json() const;
  static LogisticModel from_json(const Json& j);
};

struct LogisticSettings {
  Penalty penalty = Penalty::L2;
  double lambda = 1.0;
  /// <= 0 selects 1/L, L the curvature bound of the smooth part, which makes
  /// every full-batch step non-increasing in the objective.
  double learningRate = 0.0;
  double momentum = 0.0;
  int maxEpochs = 5000;
  double tol = 1e-10;
  bool classWeighting = false;
};

struct LogisticTrace {
  std::vector<double> objective;
  bool converged = false;
};

/// sum_i c_i * NLL_i + lambda * R(w); R = ||w||_2^2 (L2) or ||w||_1 (L1).
double logreg_objective(const LogisticModel& model, const Eigen::MatrixXd& X,
                        const Eigen::VectorXi& y, const Eigen::VectorXd& sampleWeights);

/// Gradient of logreg_objective. For L1 this is the subgradient with sign(0) = 0.
void logreg_gradient(const LogisticModel& model, const Eigen::MatrixXd& X,
                     const Eigen::VectorXi& y, const Eigen::VectorXd& sampleWeights,
                     Eigen::VectorXd& gradW, double& gradB);

/// Full-batch gradient descent (proximal soft-threshold step for L1).
/// Throws NonFinite if the objective diverges.
LogisticModel logreg_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                         const LogisticSettings& settings, LogisticTrace* trace = nullptr);

double logreg_predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd logreg_predict_proba_batch(const LogisticModel& model, const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Naive Bayes: Gaussian terms for continuous columns, Laplace-smoothed
// frequency tables for categorical ones.

struct NaiveBayesSettings {
  double varianceFloor = 1e-9;
  double alpha = 1.0;
};

struct NaiveBayesModel {
  std::array<double, 2> priors{0.5, 0.5};
  FeatureInfo info;
  Eigen::Matrix<double, 2, Eigen::Dynamic> mean;
  Eigen::Matrix<double, 2, Eigen::Dynamic> var;
  /// tables[j] is 2 x K for categorical column j, empty otherwise.
  std::vector<Eigen::MatrixXd> tables;
  /// Per-class fallback probability for codes outside the table.
  std::vector<std::array<double, 2>> unseen;

  Json to_json() const;
  static NaiveBayesModel from_json(const Json& j);
};

NaiveBayesModel nb_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const FeatureInfo& info,
                       const NaiveBayesSettings& settings = {});

/// log p(y=c) + sum_j log p(x_j | y=c)
double nb_log_joint(const NaiveBayesModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                    int cls);
double nb_predict_proba(const NaiveBayesModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd nb_predict_proba_batch(const NaiveBayesModel& model, const Eigen::MatrixXd& X);

}  // namespace crs
