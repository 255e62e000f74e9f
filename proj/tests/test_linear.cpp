#include <doctest.h>

#include <cmath>
#include <random>

#include "crs/classifier.hpp"
#include "crs/error.hpp"
#include "crs/linear.hpp"
#include "oracles.hpp"
#include "unit_common.hpp"

using crs::ErrorCode;
using doctest::Approx;

TEST_CASE("sigmoid: reference values and symmetry") {
  CHECK(crs::sigmoid(0.0) == 0.5);
  CHECK(crs::sigmoid(std::log(3.0)) == Approx(0.75).epsilon(1e-15));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double z = n(rng);
    CHECK(crs::sigmoid(z) + crs::sigmoid(-z) == Approx(1.0).epsilon(1e-15));
  }
  CHECK(crs::sigmoid(-800.0) >= 0.0);
  CHECK(crs::sigmoid(800.0) == 1.0);
  CHECK(crs::softplus(800.0) == Approx(800.0));
}

TEST_CASE("logreg_predict_proba: hand values") {
  crs::LogisticModel m;
  m.w = Eigen::Vector2d::Zero();
  Eigen::RowVector2d x(3.0, -7.0);
  CHECK(crs::logreg_predict_proba(m, x) == 0.5);
  m.w << std::log(3.0), 0.0;
  CHECK(crs::logreg_predict_proba(m, Eigen::RowVector2d(1.0, 5.0)) == Approx(0.75));
  CHECK(crs::logreg_predict_proba(m, Eigen::RowVector2d(2.0, 5.0)) > 0.75);
  CHECK_THROWS_CODE(crs::logreg_predict_proba(m, Eigen::RowVector3d(1, 2, 3)), ErrorCode::DimensionMismatch);
}

TEST_CASE("logreg_fit: symmetric separable pair") {
  Eigen::MatrixXd X(2, 1);
  X << -1.0, 1.0;
  Eigen::VectorXi y(2);
  y << 0, 1;
  crs::LogisticSettings s;
  s.lambda = 0.1;
  const auto m = crs::logreg_fit(X, y, s);
  CHECK(m.w(0) > 0.0);
  CHECK(std::fabs(m.b) < 1e-6);
}

TEST_CASE("logreg_fit: objective non-increasing and penalty-dominated limit") {
  const auto d = testdata::blobs(40, 3, 0.7, 5);
  crs::LogisticTrace trace;
  crs::LogisticSettings s;
  s.lambda = 0.5;
  crs::logreg_fit(d.X, d.y, s, &trace);
  REQUIRE(trace.objective.size() > 2);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1] + 1e-12);

  Eigen::VectorXi y = d.y;
  y.head(20).setOnes();  // 60 of 80 positive
  s.lambda = 1e7;
  const auto big = crs::logreg_fit(d.X, y, s);
  CHECK(big.w.norm() < 1e-4);
  CHECK(crs::logreg_predict_proba(big, d.X.row(0)) == Approx(0.75).epsilon(1e-3));

  s.penalty = crs::Penalty::L1;
  s.lambda = 1e4;
  const auto lasso = crs::logreg_fit(d.X, y, s);
  CHECK(lasso.w.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("logreg: gradient matches central differences") {
  std::mt19937_64 rng(8);
  const auto d = testdata::blobs(15, 4, 0.3, 8);
  for (auto penalty : {crs::Penalty::L1, crs::Penalty::L2}) {
    crs::LogisticModel m;
    m.w = testdata::gaussian(4, 1, rng);
    m.b = 0.3;
    m.penalty = penalty;
    m.lambda = 0.7;
    const Eigen::VectorXd sw = crs::inverse_prevalence_weights(d.y);
    Eigen::VectorXd gw;
    double gb = 0;
    crs::logreg_gradient(m, d.X, d.y, sw, gw, gb);
    Eigen::VectorXd analytic(5);
    analytic << gw, gb;
    const auto numeric = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& p) { return crs::logreg_objective(oracle::logreg_from_params(m, p), d.X, d.y, sw); },
        oracle::logreg_params(m));
    CHECK(oracle::relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("logreg: rescaling features with inverse weights leaves probabilities unchanged") {
  std::mt19937_64 rng(3);
  crs::LogisticModel m;
  m.w = testdata::gaussian(3, 1, rng);
  m.b = -0.2;
  const Eigen::MatrixXd X = testdata::gaussian(10, 3, rng);
  crs::LogisticModel scaled = m;
  scaled.w /= 4.0;
  const Eigen::VectorXd a = crs::logreg_predict_proba_batch(m, X);
  const Eigen::VectorXd b = crs::logreg_predict_proba_batch(scaled, 4.0 * X);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse_prevalence_weights: each class carries half the mass") {
  Eigen::VectorXi y(10);
  y << 1, 1, 1, 1, 1, 1, 1, 1, 0, 0;
  const auto w = crs::inverse_prevalence_weights(y);
  CHECK(w(0) == Approx(10.0 / 16.0));
  CHECK(w(9) == Approx(10.0 / 4.0));
  CHECK(w.sum() == Approx(10.0));
}

TEST_CASE("naive bayes: Gaussian midpoint is undecided") {
  Eigen::MatrixXd X(4, 1);
  X << -1, 1, 1, 3;
  Eigen::VectorXi y(4);
  y << 0, 0, 1, 1;
  const auto m = crs::nb_fit(X, y, crs::FeatureInfo::all_continuous(1));
  CHECK(m.priors[0] + m.priors[1] == Approx(1.0));
  CHECK(crs::nb_predict_proba(m, Eigen::RowVectorXd::Constant(1, 1.0)) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("naive bayes: categorical toy against a hand-built Bayes table") {
  crs::FeatureInfo info;
  info.names = {"a", "b"};
  info.kinds = {crs::FeatureKind::Categorical, crs::FeatureKind::Categorical};
  info.cardinalities = {2, 3};
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 2, 1, 1, 0, 2;
  Eigen::VectorXi y(4);
  y << 0, 0, 1, 1;
  const auto m = crs::nb_fit(X, y, info);
  for (const auto& t : m.tables) {
    if (t.size() == 0) continue;
    CHECK(t.row(0).sum() == Approx(1.0));
    CHECK(t.row(1).sum() == Approx(1.0));
  }
  // Laplace alpha = 1: p(a | y) over 2 codes, p(b | y) over 3 codes.
  auto p = [](int count, int n, int k) { return (count + 1.0) / (n + k); };
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 3; ++b) {
      double joint[2];
      for (int c = 0; c < 2; ++c) {
        int ca = 0, cb = 0;
        for (int i = 0; i < 4; ++i) {
          if (y(i) != c) continue;
          ca += X(i, 0) == a;
          cb += X(i, 1) == b;
        }
        joint[c] = 0.5 * p(ca, 2, 2) * p(cb, 2, 3);
      }
      const double want = joint[1] / (joint[0] + joint[1]);
      CHECK(crs::nb_predict_proba(m, Eigen::RowVector2d(a, b)) == Approx(want).epsilon(1e-12));
    }
  }
  // Unseen code falls back to smoothing.
  CHECK(std::isfinite(crs::nb_predict_proba(m, Eigen::RowVector2d(1, 7))));
}

TEST_CASE("naive bayes: prior decides with uninformative conditionals") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1000, 1);
  for (int i = 0; i < 1000; ++i) X(i, 0) = i % 2;
  // Each class holds the two x values in equal numbers.
  Eigen::VectorXi y = Eigen::VectorXi::Zero(1000);
  y.head(806).setOnes();
  crs::FeatureInfo info;
  info.names = {"x"};
  info.kinds = {crs::FeatureKind::Categorical};
  info.cardinalities = {2};
  const auto m = crs::nb_fit(X, y, info);
  CHECK(m.priors[1] == Approx(0.806));
  CHECK(crs::nb_predict_proba(m, Eigen::RowVectorXd::Zero(1)) > 0.5);
  CHECK(crs::nb_predict_proba(m, Eigen::RowVectorXd::Ones(1)) > 0.5);
}

TEST_CASE("naive bayes: feature order does not matter") {
  const auto d = testdata::blobs(20, 3, 0.5, 4);
  const auto m = crs::nb_fit(d.X, d.y, crs::FeatureInfo::all_continuous(3));
  Eigen::MatrixXd Xp(d.X.rows(), 3);
  Xp << d.X.col(2), d.X.col(0), d.X.col(1);
  const auto mp = crs::nb_fit(Xp, d.y, crs::FeatureInfo::all_continuous(3));
  CHECK((crs::nb_predict_proba_batch(m, d.X) - crs::nb_predict_proba_batch(mp, Xp)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.var.array() >= 1e-9).all());
}

TEST_CASE("classifiers: lr and nb above majority rate on the cohort, save/load identical") {
  const auto& s = testdata::split();
  const double majority = static_cast<double>(s.test.count(1)) / static_cast<double>(s.test.rows());
  for (const char* kind : {"lr", "nb"}) {
    auto m = crs::make_classifier(kind, {{"seed", 7}});
    m->fit(s.train);
    const double acc = testdata::accuracy(m->predict(s.test.X), s.test.y);
    if (std::string(kind) == "lr") CHECK(acc > majority);
    const auto back = crs::classifier_from_jsonl(crs::classifier_to_jsonl(*m));
    CHECK(back->predict_proba(s.test.X) == m->predict_proba(s.test.X));
  }
}
