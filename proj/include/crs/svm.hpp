#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

enum class KernelType { Linear, Rbf };

struct Kernel {
  KernelType type = KernelType::Rbf;
  double gamma = 0.0;  // rbf only; <= 0 means "pick from data" at fit time

  template <typename A, typename B>
  double operator()(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) const {
    if (type == KernelType::Linear) return a.dot(b);
    return std::exp(-gamma * (a - b).squaredNorm());
  }

  static Kernel linear() { return {KernelType::Linear, 0.0}; }
  static Kernel rbf(double gamma) { return {KernelType::Rbf, gamma}; }
};

/// K(a, b); throws DimensionMismatch for rows of different width.
double kernel_eval(const Kernel& kernel, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                   const Eigen::Ref<const Eigen::RowVectorXd>& b);

Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& X);

/// 1 / (d * Var(X)) over all entries of X.
double default_rbf_gamma(const Eigen::MatrixXd& X);

struct SvmModel {
  Eigen::MatrixXd supportVectors;
  Eigen::VectorXd dualCoef;  // alpha_i * y_i, y in {-1, +1}
  double b = 0.0;
  Kernel kernel;
  double C = 1.0;

  Json to_json() const;
  static SvmModel from_json(const Json& j);
};

struct SvmSettings {
  Kernel kernel;
  double C = 1.0;
  double tol = 1e-3;
  /// Sweep limit over the training set; 0 means 10 * n (at least 200).
  int maxPasses = 0;
  std::uint64_t seed = 1;
};

/// Full dual solution, including the zero coefficients the model drops.
struct SvmSolution {
  Eigen::VectorXd alpha;
  Eigen::VectorXd signedLabels;
  double b = 0.0;
  int passes = 0;
};

/// W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
double svm_dual_objective(const Eigen::VectorXd& alpha, const Eigen::VectorXd& signedLabels,
                          const Eigen::MatrixXd& gram);

/// Sequential minimal optimization over pairs: the first coordinate is any
/// KKT violator, the second is drawn at random (every other index is tried
/// when the random partner cannot move). Labels 0/1 are mapped to -1/+1.
/// Throws NoConvergence when KKT conditions still fail after maxPasses sweeps.
SvmModel svm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const SvmSettings& settings,
                 SvmSolution* solution = nullptr);

double svm_decision(const SvmModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd svm_decision_batch(const SvmModel& model, const Eigen::MatrixXd& X);
/// Class 1 iff decision >= 0.
int svm_predict(const SvmModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace crs
