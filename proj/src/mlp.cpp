#include "crs/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "crs/error.hpp"
#include "crs/eval.hpp"
#include "crs/linear.hpp"

namespace crs {

MlpModel mlp_init(Index d, Index width, std::uint64_t seed) {
  if (width < 1 || d < 1) throw Error(ErrorCode::InvalidArgument, "MLP needs width >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  auto glorot = [&](Index fanIn, Index fanOut) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fanIn + fanOut));
    return std::uniform_real_distribution<double>(-limit, limit);
  };
  MlpModel m;
  m.W1.resize(width, d);
  auto hidden = glorot(d, width);
  for (Index i = 0; i < width; ++i)
    for (Index j = 0; j < d; ++j) m.W1(i, j) = hidden(rng);
  m.b1 = Eigen::VectorXd::Zero(width);
  m.w2.resize(width);
  auto out = glorot(width, 1);
  for (Index i = 0; i < width; ++i) m.w2(i) = out(rng);
  m.b2 = 0.0;
  return m;
}

namespace {

/// Output logits for every row of X; also returns the hidden pre-activations.
Eigen::VectorXd logits(const MlpModel& m, const Eigen::MatrixXd& X, Eigen::MatrixXd* pre = nullptr) {
  Eigen::MatrixXd Z = X * m.W1.transpose();
  Z.rowwise() += m.b1.transpose();
  Eigen::VectorXd z = Z.cwiseMax(0.0) * m.w2;
  z.array() += m.b2;
  if (pre) *pre = std::move(Z);
  return z;
}

double data_loss(const Eigen::VectorXd& z, const Eigen::VectorXi& y, const std::array<double, 2>& c) {
  double sum = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double bce = y(i) == 1 ? softplus(-z(i)) : softplus(z(i));
    sum += c[static_cast<std::size_t>(y(i))] * bce;
  }
  return y.size() ? sum / static_cast<double>(y.size()) : 0.0;
}

void check_labels(const Eigen::VectorXi& y) {
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0 && y(i) != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
}

}  // namespace

double mlp_forward(const MlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != model.input_cols()) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(model.input_cols()) +
                                                  " inputs, got " + std::to_string(row.size()));
  }
  const Eigen::VectorXd h = (model.W1 * row.transpose() + model.b1).cwiseMax(0.0);
  return sigmoid(h.dot(model.w2) + model.b2);
}

Eigen::VectorXd mlp_predict_proba(const MlpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.input_cols()) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(model.input_cols()) +
                                                  " inputs, got " + std::to_string(X.cols()));
  }
  return sigmoid(logits(model, X).array()).matrix();
}

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXi& y) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  return data_loss(logits(model, X), y, model.classWeights) +
         model.lambda * (model.W1.squaredNorm() + model.w2.squaredNorm());
}

MlpGradient mlp_gradient(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXi& y) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  Eigen::MatrixXd pre;
  const Eigen::VectorXd z = logits(model, X, &pre);
  const double n = static_cast<double>(std::max<Index>(y.size(), 1));
  Eigen::VectorXd dz(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    dz(i) = model.classWeights[static_cast<std::size_t>(y(i))] * (sigmoid(z(i)) - y(i)) / n;
  }
  const Eigen::MatrixXd H = pre.cwiseMax(0.0);
  MlpGradient g;
  g.w2 = H.transpose() * dz + 2.0 * model.lambda * model.w2;
  g.b2 = dz.sum();
  Eigen::MatrixXd dpre = dz * model.w2.transpose();
  dpre.array() *= (pre.array() > 0.0).cast<double>();
  g.W1 = dpre.transpose() * X + 2.0 * model.lambda * model.W1;
  g.b1 = dpre.colwise().sum().transpose();
  return g;
}

std::string TrainTrace::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,valid_loss,valid_balanced_accuracy\n";
  for (std::size_t e = 0; e < trainLoss.size(); ++e) {
    out << e + 1 << ',' << trainLoss[e] << ',' << (e < validLoss.size() ? validLoss[e] : 0.0) << ','
        << (e < validBalancedAccuracy.size() ? validBalancedAccuracy[e] : 0.0) << '\n';
  }
  return out.str();
}

MlpModel mlp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const MlpSettings& settings,
                 TrainTrace* trace) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  check_labels(y);
  if ((y.array() == 1).count() < 2 || (y.array() == 0).count() < 2) {
    throw Error(ErrorCode::DegenerateClass, "MLP training needs both classes");
  }
  if (settings.batchSize < 1 || settings.maxEpochs < 1 || settings.patience < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid MLP optimizer settings");
  }

  Eigen::MatrixXd Xt, Xv;
  Eigen::VectorXi yt, yv;
  if (settings.validationFraction > 0.0) {
    const auto split = stratified_split(y, settings.validationFraction, settings.seed);
    Xt = X(split.trainRows, Eigen::all);
    yt = y(split.trainRows);
    Xv = X(split.testRows, Eigen::all);
    yv = y(split.testRows);
  } else {
    Xt = X;
    yt = y;
  }
  const bool useValid = yv.size() > 0;

  MlpModel model = mlp_init(X.cols(), settings.width, settings.seed ^ 0x9e3779b97f4a7c15ULL);
  model.lambda = settings.lambda;
  if (settings.classWeighting) {
    const double n = static_cast<double>(yt.size());
    const double n1 = static_cast<double>((yt.array() == 1).count());
    model.classWeights = {n / (2.0 * (n - n1)), n / (2.0 * n1)};
  }

  TrainTrace local;
  TrainTrace& tr = trace ? *trace : local;
  tr = TrainTrace{};
  tr.stopReason = "max-epochs";

  MlpGradient vel{Eigen::MatrixXd::Zero(model.W1.rows(), model.W1.cols()),
                  Eigen::VectorXd::Zero(model.width()), Eigen::VectorXd::Zero(model.width()), 0.0};
  MlpModel best = model;
  double bestLoss = std::numeric_limits<double>::infinity();
  std::vector<Index> order(static_cast<std::size_t>(yt.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(settings.seed);
  const double lr = settings.learningRate, mu = settings.momentum;

  for (int epoch = 1; epoch <= settings.maxEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batchSize)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(settings.batchSize));
      const std::vector<Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      const MlpGradient g = mlp_gradient(model, Xt(batch, Eigen::all), yt(batch));
      vel.W1 = mu * vel.W1 - lr * g.W1;
      vel.b1 = mu * vel.b1 - lr * g.b1;
      vel.w2 = mu * vel.w2 - lr * g.w2;
      vel.b2 = mu * vel.b2 - lr * g.b2;
      model.W1 += vel.W1;
      model.b1 += vel.b1;
      model.w2 += vel.w2;
      model.b2 += vel.b2;
    }
    const double trainLoss = mlp_loss(model, Xt, yt);
    if (!std::isfinite(trainLoss)) {
      throw Error(ErrorCode::NonFinite, "MLP training diverged at epoch " + std::to_string(epoch));
    }
    tr.trainLoss.push_back(trainLoss);
    tr.stoppedEpoch = epoch;

    double monitored = trainLoss;
    if (useValid) {
      const Eigen::VectorXd z = logits(model, Xv);
      monitored = data_loss(z, yv, model.classWeights);
      tr.validLoss.push_back(monitored);
      Eigen::VectorXi pred = (z.array() >= 0.0).cast<int>();
      tr.validBalancedAccuracy.push_back(balanced_accuracy(yv, pred));
    }
    if (monitored < bestLoss) {
      bestLoss = monitored;
      best = model;
      tr.bestEpoch = epoch;
    } else if (epoch - tr.bestEpoch >= settings.patience) {
      tr.stopReason = "early-stop";
      break;
    }
  }
  return best;
}

std::vector<int> default_width_grid() { return {25, 50, 100, 200, 300, 400, 480}; }

SweepResult width_sweep(const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                        const std::vector<int>& widths, int folds, const MlpSettings& base,
                        std::uint64_t seed) {
  if (widths.empty()) throw Error(ErrorCode::InvalidArgument, "width grid is empty");
  const auto fold = stratified_folds(y, folds, seed);
  SweepResult result;
  double bestF1 = -1.0;
  for (int width : widths) {
    Eigen::VectorXi pred(y.size());
    for (int k = 0; k < folds; ++k) {
      std::vector<Index> train, test;
      for (Index i = 0; i < y.size(); ++i) (fold[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
      MlpSettings s = base;
      s.width = width;
      s.seed = seed + static_cast<std::uint64_t>(k);
      const MlpModel m = mlp_fit(X(train, Eigen::all), y(train), s);
      const Eigen::VectorXd p = mlp_predict_proba(m, X(test, Eigen::all));
      for (std::size_t t = 0; t < test.size(); ++t) pred(test[t]) = p(static_cast<Index>(t)) >= 0.5 ? 1 : 0;
    }
    const EvalReport r = report(confusion(y, pred));
    result.scores.push_back({width, r.accuracy, r.weightedF1, r.perClass[0].f1, r.perClass[1].f1});
    if (r.perClass[0].f1 > bestF1 ||
        (r.perClass[0].f1 == bestF1 && width < result.chosenWidth)) {
      bestF1 = r.perClass[0].f1;
      result.chosenWidth = width;
    }
  }
  return result;
}

Json MlpModel::to_json() const {
  return Json{{"width", width()},
              {"inputs", input_cols()},
              {"lambda", lambda},
              {"classWeights", classWeights},
              {"W1", to_json_matrix(W1)},
              {"b1", to_json_array(b1)},
              {"w2", to_json_array(w2)},
              {"b2", b2}};
}

MlpModel MlpModel::from_json(const Json& j) {
  MlpModel m;
  m.lambda = j.at("lambda").get<double>();
  m.classWeights = j.at("classWeights").get<std::array<double, 2>>();
  m.W1 = matrix_from_json(j.at("W1"));
  m.b1 = vector_from_json(j.at("b1"));
  m.w2 = vector_from_json(j.at("w2"));
  m.b2 = j.at("b2").get<double>();
  if (m.W1.rows() != m.b1.size() || m.W1.rows() != m.w2.size()) {
    throw Error(ErrorCode::ParseError, "inconsistent MLP layer shapes");
  }
  return m;
}

}  // namespace crs
