#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

/// One rectifier hidden layer, sigmoid output.
struct MlpModel {
  Eigen::MatrixXd W1;  // width x d
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // width
  double b2 = 0.0;
  double lambda = 0.0;
  std::array<double, 2> classWeights{1.0, 1.0};

  Index width() const { return W1.rows(); }
  Index input_cols() const { return W1.cols(); }

  Json to_json() const;
  static MlpModel from_json(const Json& j);
};

struct MlpGradient {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

/// Glorot-uniform weights, zero biases.
MlpModel mlp_init(Index d, Index width, std::uint64_t seed);

double mlp_forward(const MlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
Eigen::VectorXd mlp_predict_proba(const MlpModel& model, const Eigen::MatrixXd& X);

/// (1/n) sum_i c_{y_i} BCE_i + lambda (||W1||^2 + ||w2||^2)
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXi& y);
/// Analytic gradient of mlp_loss; the rectifier derivative at 0 is taken as 0.
MlpGradient mlp_gradient(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXi& y);

struct MlpSettings {
  int width = 400;
  double lambda = 1e-4;
  bool classWeighting = true;
  int batchSize = 32;
  double learningRate = 1e-3;
  double momentum = 0.9;
  int patience = 20;
  int maxEpochs = 2000;
  double validationFraction = 0.15;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> trainLoss;
  std::vector<double> validLoss;
  std::vector<double> validBalancedAccuracy;
  int stoppedEpoch = 0;
  int bestEpoch = 0;
  std::string stopReason;  // "early-stop" | "max-epochs"

  /// epoch,train_loss,valid_loss,valid_balanced_accuracy
  std::string to_csv() const;
};

/// Momentum SGD on mini-batches over a stratified train/validation split of
/// the input; the parameters with the lowest validation loss are returned.
/// Throws DegenerateClass without both classes, NonFinite on divergence.
MlpModel mlp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const MlpSettings& settings,
                 TrainTrace* trace = nullptr);

std::vector<int> default_width_grid();

struct WidthScore {
  int width = 0;
  double accuracy = 0.0;
  double weightedF1 = 0.0;
  double class0F1 = 0.0;
  double class1F1 = 0.0;
};

struct SweepResult {
  std::vector<WidthScore> scores;
  int chosenWidth = 0;
};

/// Stratified k-fold cross-validation per width; picks the width with the
/// largest class-0 F1 (ties to the smaller width).
SweepResult width_sweep(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                        const std::vector<int>& widths, int folds, const MlpSettings& base,
                        std::uint64_t seed);

}  // namespace crs
